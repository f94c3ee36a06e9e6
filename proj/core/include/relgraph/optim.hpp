#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "relgraph/tensor.hpp"

namespace relgraph {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment accumulators, one tensor per parameter.
struct AdamState {
    int64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    void init(std::span<const Tensor> params);
    bool initialized() const { return !m.empty(); }
};

// One bias-corrected Adam update over an aligned parameter/gradient
// list. Increments the step counter. Throws on any shape mismatch.
void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

// Step size after the stated decay schedule: initial * factor^(epoch/period).
double lr_at(int64_t epoch, double initial = 1e-3, double factor = 0.8, int64_t period = 10);

// Scales gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

}  // namespace relgraph
