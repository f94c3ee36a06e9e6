#include "relgraph/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace relgraph {

void AdamState::init(std::span<const Tensor> params) {
    step = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Tensor& p : params) {
        m.push_back(Tensor::zeros(p.shape()));
        v.push_back(Tensor::zeros(p.shape()));
    }
}

void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: gradient count mismatch");
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state size mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
        if (!params[i].same_shape(grads[i]) || !params[i].same_shape(state.m[i]))
            throw std::invalid_argument("adam_step: shape mismatch");
    }
    state.step += 1;
    double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (int64_t j = 0; j < p.numel(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

double lr_at(int64_t epoch, double initial, double factor, int64_t period) {
    if (epoch < 0) throw std::invalid_argument("lr_at: negative epoch");
    return initial * std::pow(factor, static_cast<double>(epoch / period));
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const Tensor& g : grads)
        for (int64_t j = 0; j < g.numel(); ++j) sq += g[j] * g[j];
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        double s = max_norm / norm;
        for (Tensor& g : grads)
            for (int64_t j = 0; j < g.numel(); ++j) g[j] *= s;
    }
    return norm;
}

}  // namespace relgraph
