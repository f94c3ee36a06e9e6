#pragma once

// Independent reference implementations used as test oracles. These
// deliberately avoid the library's computation paths: dense power
// iteration for pagerank, central differences for gradients, direct
// confusion-matrix counting for metrics.

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "relgraph/tensor.hpp"

namespace oracles {

// central difference (f(x+h) - f(x-h)) / 2h
inline double central_difference(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a - b| / max(1, |a|, |b|)
inline double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Checks every parameter entry of a tensor-valued function against
// central differences. `loss` must be a pure function of the parameter
// list. Returns the worst relative error.
inline double max_gradient_error(
    std::vector<relgraph::Tensor> params,
    const std::function<double(const std::vector<relgraph::Tensor>&)>& loss,
    const std::vector<relgraph::Tensor>& analytic, double h = 1e-5) {
    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        for (int64_t j = 0; j < params[p].numel(); ++j) {
            double saved = params[p][j];
            params[p][j] = saved + h;
            double up = loss(params);
            params[p][j] = saved - h;
            double down = loss(params);
            params[p][j] = saved;
            double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, rel_error(fd, analytic[p][j]));
        }
    }
    return worst;
}

// dense personalized pagerank by explicit matrix power iteration
inline std::vector<double> dense_ppr(int64_t n, const std::vector<std::pair<int64_t, int64_t>>& undirected_edges,
                                     const std::vector<int64_t>& seeds, double damping, int64_t iters) {
    std::vector<std::vector<double>> w(static_cast<size_t>(n), std::vector<double>(static_cast<size_t>(n), 0.0));
    for (auto [a, b] : undirected_edges) {
        w[static_cast<size_t>(a)][static_cast<size_t>(b)] += 1.0;
        if (a != b) w[static_cast<size_t>(b)][static_cast<size_t>(a)] += 1.0;
    }
    std::vector<double> restart(static_cast<size_t>(n), 0.0);
    for (int64_t s : seeds) restart[static_cast<size_t>(s)] += 1.0 / static_cast<double>(seeds.size());
    std::vector<double> p = restart;
    for (int64_t it = 0; it < iters; ++it) {
        std::vector<double> next(static_cast<size_t>(n), 0.0);
        double dangling = 0.0;
        for (int64_t u = 0; u < n; ++u) {
            double deg = 0.0;
            for (int64_t v = 0; v < n; ++v) deg += w[static_cast<size_t>(u)][static_cast<size_t>(v)];
            if (deg == 0.0) {
                dangling += p[static_cast<size_t>(u)];
                continue;
            }
            for (int64_t v = 0; v < n; ++v)
                next[static_cast<size_t>(v)] += p[static_cast<size_t>(u)] * w[static_cast<size_t>(u)][static_cast<size_t>(v)] / deg;
        }
        for (int64_t v = 0; v < n; ++v)
            next[static_cast<size_t>(v)] = (1.0 - damping) * restart[static_cast<size_t>(v)] +
                                           damping * (next[static_cast<size_t>(v)] + dangling * restart[static_cast<size_t>(v)]);
        p = next;
    }
    return p;
}

// brute-force confusion counts over pooled binary decisions
struct Confusion {
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion count_confusion(const std::vector<std::vector<double>>& probs,
                                 const std::vector<std::vector<double>>& labels, double threshold) {
    Confusion c;
    for (size_t q = 0; q < probs.size(); ++q) {
        for (size_t i = 0; i < probs[q].size(); ++i) {
            bool pred = probs[q][i] >= threshold;
            bool act = labels[q][i] != 0.0;
            if (pred && act) ++c.tp;
            else if (pred && !act) ++c.fp;
            else if (!pred && act) ++c.fn;
            else ++c.tn;
        }
    }
    return c;
}

// single-direction scalar LSTM recurrence written out longhand
struct ScalarLstmParams {
    double wx_i, wh_i, b_i;
    double wx_f, wh_f, b_f;
    double wx_g, wh_g, b_g;
    double wx_o, wh_o, b_o;
};

inline std::vector<double> scalar_lstm(const ScalarLstmParams& p, const std::vector<double>& xs) {
    auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    double h = 0.0, c = 0.0;
    std::vector<double> states;
    for (double x : xs) {
        double i = sig(p.wx_i * x + p.wh_i * h + p.b_i);
        double f = sig(p.wx_f * x + p.wh_f * h + p.b_f);
        double g = std::tanh(p.wx_g * x + p.wh_g * h + p.b_g);
        double o = sig(p.wx_o * x + p.wh_o * h + p.b_o);
        c = f * c + i * g;
        h = o * std::tanh(c);
        states.push_back(h);
    }
    return states;
}

// breadth-first search distance over an undirected edge set
inline int64_t bfs_distance(int64_t n, const std::vector<std::pair<int64_t, int64_t>>& edges,
                            const std::vector<int64_t>& sources, int64_t target) {
    std::vector<std::vector<int64_t>> adj(static_cast<size_t>(n));
    for (auto [a, b] : edges) {
        adj[static_cast<size_t>(a)].push_back(b);
        adj[static_cast<size_t>(b)].push_back(a);
    }
    std::vector<int64_t> dist(static_cast<size_t>(n), -1);
    std::vector<int64_t> frontier;
    for (int64_t s : sources) {
        if (dist[static_cast<size_t>(s)] < 0) {
            dist[static_cast<size_t>(s)] = 0;
            frontier.push_back(s);
        }
    }
    while (!frontier.empty()) {
        std::vector<int64_t> next;
        for (int64_t u : frontier) {
            for (int64_t v : adj[static_cast<size_t>(u)]) {
                if (dist[static_cast<size_t>(v)] < 0) {
                    dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
                    next.push_back(v);
                }
            }
        }
        frontier = std::move(next);
    }
    return dist[static_cast<size_t>(target)];
}

}  // namespace oracles
