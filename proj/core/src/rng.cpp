#include "relgraph/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace relgraph {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// splitmix64 finalizer
uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(uint64_t seed, uint64_t stream)
    : seed_(stream == 0 ? mix64(seed + kGolden) : mix64(mix64(seed + kGolden) ^ mix64(stream + kGolden))) {}

uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGolden);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::gaussian() {
    double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

int64_t RngStream::uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int requires n > 0");
    // 128-bit multiply mapping; bias is below 2^-64 per draw
    unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    return static_cast<int64_t>(wide >> 64);
}

bool RngStream::bernoulli(double p) { return uniform() < p; }

RngStream RngStream::fork(uint64_t tag) const {
    RngStream child(0);
    child.seed_ = mix64(seed_ ^ mix64(tag + kGolden));
    child.counter_ = 0;
    return child;
}

}  // namespace relgraph
