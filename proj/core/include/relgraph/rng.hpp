#pragma once

#include <cstdint>
#include <vector>

namespace relgraph {

// Counter-based deterministic random stream. Each draw is a pure
// function of (seed, counter), so identical seeds replay identical
// sequences on every platform. Distributions are implemented here
// rather than with <random> adapters, whose output is not pinned by
// the standard.
class RngStream {
public:
    explicit RngStream(uint64_t seed, uint64_t stream = 0);

    uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double gaussian();                      // mean 0, stddev 1; consumes two draws
    double gaussian(double mean, double stddev);
    int64_t uniform_int(int64_t n);         // [0, n), n > 0
    bool bernoulli(double p);               // true with probability p

    // Independent child stream; deterministic in (seed, tag).
    RngStream fork(uint64_t tag) const;

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    uint64_t counter_ = 0;
};

}  // namespace relgraph
