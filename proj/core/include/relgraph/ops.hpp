#pragma once

#include <span>
#include <vector>

#include "relgraph/rng.hpp"
#include "relgraph/tape.hpp"
#include "relgraph/tensor.hpp"

namespace relgraph {

// Stable exp-normalize over the listed subset of logits. Output is
// aligned with `group` and sums to 1. Throws on an empty group.
std::vector<double> softmax_over_group(std::span<const double> logits, std::span<const int64_t> group);

// Softmax over an entire logit vector.
std::vector<double> softmax_all(std::span<const double> logits);

// Inverted-scaling dropout. In training each element survives with
// probability 1-rate (one uniform draw per element, row-major order)
// and is scaled by 1/(1-rate). Outside training the input is returned
// untouched and the stream is not consumed.
Tensor dropout(const Tensor& x, double rate, RngStream& rng, bool training);

// Batch normalization over the row axis of x ([n, channels]). Training
// mode normalizes by biased batch statistics (epsilon added inside the
// square root) and folds them into the running buffers with the given
// momentum; evaluation mode applies the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& scale, const Tensor& shift,
                  BatchNormBuffers& buffers, bool training, double momentum = 0.9,
                  double eps = 1e-5);

// Mean binary cross entropy over node decisions.
double bce_loss(std::span<const double> probabilities, std::span<const double> labels);

}  // namespace relgraph
