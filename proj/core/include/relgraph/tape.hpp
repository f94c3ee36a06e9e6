#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "relgraph/rng.hpp"
#include "relgraph/tensor.hpp"

namespace relgraph {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid until the owning
// tape is reset.
class Var {
public:
    Var() = default;
    bool valid() const { return tape_ != nullptr; }
    int32_t id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, int32_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int32_t id_ = -1;
};

// Running statistics for batch normalization; lives outside the tape
// and persists across forward passes (checkpointed with the model).
struct BatchNormBuffers {
    std::vector<double> mean;
    std::vector<double> var;
    void init(int64_t channels) {
        mean.assign(static_cast<size_t>(channels), 0.0);
        var.assign(static_cast<size_t>(channels), 1.0);
    }
};

// Record of executed primitive operations, in execution order, with
// enough payload to replay gradients in reverse. Inputs of every
// operation precede it, and the backward sweep visits each operation
// exactly once. Values and adjoints live in flat arenas that are
// recycled by reset().
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // inputs
    Var leaf(const Tensor& t);       // differentiable input (parameter)
    Var constant(const Tensor& t);   // input that never receives gradient
    Var constant_row(std::span<const double> values);

    // elementwise / scalar
    Var add(Var a, Var b);
    Var add(std::span<const Var> xs);  // n-ary, at least one element
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var tanh_op(Var a);

    // linear algebra (row-vector convention: states are [1, d], y = x * W)
    Var matmul(Var a, Var b);     // [m,k] x [k,n] -> [m,n]
    Var matmul_t1(Var a, Var b);  // A^T B: [k,m], [k,n] -> [m,n]
    Var dot(Var a, Var b);        // same shape -> [1,1]

    // structure
    Var concat_cols(std::span<const Var> xs);  // same rows, cols summed
    Var stack_rows(std::span<const Var> xs);   // k x [1,d] -> [k,d]
    Var row(Var m, int64_t i);                 // [n,d] -> [1,d]
    Var mean_rows(Var m);                      // [n,d] -> [1,d]
    Var gather_sum_rows(Var m, std::span<const int64_t> rows);  // sum of selected rows
    // copy of m with vecs[i] added to row rows[i]
    Var scatter_add_rows(Var m, std::span<const Var> vecs, std::span<const int64_t> rows);

    // fused numerics
    Var softmax(Var scores);  // [1,k] -> [1,k], max-subtracted
    Var weighted_sum(Var weights, std::span<const Var> vecs);  // [1,k] weights, k x [1,d]
    Var bce_mean(Var probs, std::span<const double> labels);   // [n,1] or [1,n] -> [1,1]
    Var batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers* buffers, bool training,
                   double momentum = 0.9, double eps = 1e-5);
    Var dropout(Var x, double rate, RngStream& rng);  // training path only

    // gradients
    void backward(Var output);  // output must be [1,1]
    std::span<const double> value(Var v) const;
    std::span<const double> grad(Var v) const;
    double value_scalar(Var v) const { return value(v)[0]; }
    Tensor value_tensor(Var v) const;
    Tensor grad_tensor(Var v) const;
    int64_t rows(Var v) const;
    int64_t cols(Var v) const;

    void reset();  // drop all nodes, keep arena capacity
    size_t size() const { return nodes_.size(); }

    // verify every operation output is finite as it is produced
    void set_check_finite(bool on) { check_finite_ = on; }

private:
    enum class Op : uint8_t {
        Leaf, Const,
        Add, AddN, Sub, Mul, Neg, Scale,
        Relu, Sigmoid, Tanh,
        Matmul, MatmulT1, Dot,
        ConcatCols, StackRows, Row, MeanRows, GatherSumRows, ScatterAddRows,
        Softmax, WeightedSum, BceMean, BatchNorm, Dropout,
    };

    struct Node {
        Op op;
        bool is_const;      // no gradient flows out of this node
        int32_t a = -1;     // direct parents
        int32_t b = -1;
        int32_t c = -1;
        int32_t ints_ofs = 0, ints_len = 0;  // payload in ints_ arena
        int32_t dbls_ofs = 0, dbls_len = 0;  // payload in dbls_ arena
        int32_t rows = 0, cols = 0;
        int32_t extra = -1;     // op-specific small integer (row index, bn ref)
        double s0 = 0.0;        // op-specific scalars
        double s1 = 0.0;
        int64_t buf = 0;        // offset into value/grad arenas
    };

    Var push(Op op, int64_t rows, int64_t cols);
    double* val(const Node& n) { return values_.data() + n.buf; }
    const double* val(const Node& n) const { return values_.data() + n.buf; }
    double* grd(const Node& n) { return grads_.data() + n.buf; }
    const Node& node(Var v) const;
    void check_same_tape(Var v) const;
    void finite_check(const Node& n) const;
    void backward_node(const Node& n);

    std::vector<Node> nodes_;
    std::vector<double> values_;
    std::vector<double> grads_;
    std::vector<int32_t> ints_;
    std::vector<double> dbls_;
    std::vector<BatchNormBuffers*> bn_refs_;
    bool check_finite_ = false;
};

// Gradient of a scalar output with respect to each listed parameter
// leaf; zero tensors for parameters the output does not depend on.
std::vector<Tensor> grad(Tape& tape, Var output, std::span<const Var> params);

}  // namespace relgraph
