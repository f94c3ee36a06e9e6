#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace relgraph {

// Dense row-major tensor of 64-bit reals. Values are immutable by
// convention once a tensor has been handed to another component;
// mutation is reserved for owners (optimizer, initializers).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);  // shape [1, n]

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(values_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }

    // rank <= 2 helpers; a rank-1 tensor of n entries reads as [1, n]
    int64_t rows() const;
    int64_t cols() const;

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return values_[static_cast<size_t>(r * cols() + c)]; }
    double at(int64_t r, int64_t c) const { return values_[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_string() const;  // e.g. "[3, 4]"

private:
    std::vector<int64_t> shape_;
    std::vector<double> values_;
};

int64_t shape_numel(std::span<const int64_t> shape);

}  // namespace relgraph
