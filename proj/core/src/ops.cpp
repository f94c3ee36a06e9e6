#include "relgraph/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "relgraph/errors.hpp"

namespace relgraph {

std::vector<double> softmax_over_group(std::span<const double> logits,
                                       std::span<const int64_t> group) {
    if (group.empty()) throw std::invalid_argument("empty normalization set");
    double mx = logits[static_cast<size_t>(group[0])];
    for (int64_t i : group) mx = std::max(mx, logits[static_cast<size_t>(i)]);
    std::vector<double> out(group.size());
    double sum = 0.0;
    for (size_t k = 0; k < group.size(); ++k) {
        out[k] = std::exp(logits[static_cast<size_t>(group[k])] - mx);
        sum += out[k];
    }
    for (double& v : out) v /= sum;
    return out;
}

std::vector<double> softmax_all(std::span<const double> logits) {
    std::vector<int64_t> group(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) group[i] = static_cast<int64_t>(i);
    return softmax_over_group(logits, group);
}

Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0,1)");
    if (!training) return x;
    Tensor out = x;
    double keep_scale = 1.0 / (1.0 - rate);
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = rng.uniform() >= rate ? out[i] * keep_scale : 0.0;
    }
    return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  BatchNormBuffers& buffers, bool training, double momentum, double eps) {
    int64_t rows = x.rows(), cols = x.cols();
    if (training && rows < 1) throw std::invalid_argument("batch_norm: empty training batch");
    if (scale.numel() != cols || shift.numel() != cols)
        throw std::invalid_argument("batch_norm: scale/shift must have one entry per channel");
    if (buffers.mean.size() != static_cast<size_t>(cols)) buffers.init(cols);

    std::vector<double> mean(static_cast<size_t>(cols), 0.0);
    std::vector<double> var(static_cast<size_t>(cols), 0.0);
    if (training) {
        double inv_n = 1.0 / static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) mean[static_cast<size_t>(c)] += x.at(r, c);
        for (double& m : mean) m *= inv_n;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) {
                double d = x.at(r, c) - mean[static_cast<size_t>(c)];
                var[static_cast<size_t>(c)] += d * d;
            }
        for (double& v : var) v *= inv_n;
        for (int64_t c = 0; c < cols; ++c) {
            auto i = static_cast<size_t>(c);
            buffers.mean[i] = momentum * buffers.mean[i] + (1.0 - momentum) * mean[i];
            buffers.var[i] = momentum * buffers.var[i] + (1.0 - momentum) * var[i];
        }
    } else {
        mean.assign(buffers.mean.begin(), buffers.mean.end());
        var.assign(buffers.var.begin(), buffers.var.end());
    }

    Tensor out({rows, cols});
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            auto i = static_cast<size_t>(c);
            out.at(r, c) = scale[c] * (x.at(r, c) - mean[i]) / std::sqrt(var[i] + eps) + shift[c];
        }
    return out;
}

double bce_loss(std::span<const double> probabilities, std::span<const double> labels) {
    if (probabilities.size() != labels.size())
        throw std::invalid_argument("bce_loss: length mismatch");
    if (probabilities.empty()) throw std::invalid_argument("bce_loss: empty input");
    constexpr double kEps = 1e-12;
    double loss = 0.0;
    for (size_t i = 0; i < probabilities.size(); ++i) {
        double p = std::min(std::max(probabilities[i], kEps), 1.0 - kEps);
        loss += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
    }
    return loss / static_cast<double>(probabilities.size());
}

}  // namespace relgraph
