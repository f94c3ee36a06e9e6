#include "relgraph/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "relgraph/errors.hpp"

namespace relgraph {

namespace {
constexpr double kBceEps = 1e-12;

double stable_sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

const Tape::Node& Tape::node(Var v) const {
    if (v.tape() != this) throw std::logic_error("Var used with a different tape");
    return nodes_[static_cast<size_t>(v.id())];
}

void Tape::check_same_tape(Var v) const {
    if (v.tape() != this) throw std::logic_error("Var used with a different tape");
}

Var Tape::push(Op op, int64_t rows, int64_t cols) {
    if (rows <= 0 || cols <= 0) throw std::invalid_argument("tape op with empty shape");
    Node n;
    n.op = op;
    n.is_const = false;
    n.rows = static_cast<int32_t>(rows);
    n.cols = static_cast<int32_t>(cols);
    n.buf = static_cast<int64_t>(values_.size());
    values_.resize(values_.size() + static_cast<size_t>(rows * cols), 0.0);
    nodes_.push_back(n);
    return Var(this, static_cast<int32_t>(nodes_.size() - 1));
}

void Tape::finite_check(const Node& n) const {
    if (!check_finite_) return;
    const double* v = values_.data() + n.buf;
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) {
        if (!std::isfinite(v[i])) throw NumericError("non-finite value produced by tape operation");
    }
}

Var Tape::leaf(const Tensor& t) {
    Var v = push(Op::Leaf, t.rows(), t.cols());
    std::memcpy(val(nodes_.back()), t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
    finite_check(nodes_.back());
    return v;
}

Var Tape::constant(const Tensor& t) {
    Var v = push(Op::Const, t.rows(), t.cols());
    nodes_.back().is_const = true;
    std::memcpy(val(nodes_.back()), t.data(), sizeof(double) * static_cast<size_t>(t.numel()));
    finite_check(nodes_.back());
    return v;
}

Var Tape::constant_row(std::span<const double> values) {
    Var v = push(Op::Const, 1, static_cast<int64_t>(values.size()));
    nodes_.back().is_const = true;
    std::memcpy(val(nodes_.back()), values.data(), sizeof(double) * values.size());
    finite_check(nodes_.back());
    return v;
}

Var Tape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) throw std::invalid_argument("add: shape mismatch");
    Var out = push(Op::Add, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = x[i] + y[i];
    finite_check(n);
    return out;
}

Var Tape::add(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("add: empty operand list");
    if (xs.size() == 1) return xs[0];
    if (xs.size() == 2) return add(xs[0], xs[1]);
    const Node& first = node(xs[0]);
    for (const Var& v : xs) {
        const Node& nv = node(v);
        if (nv.rows != first.rows || nv.cols != first.cols)
            throw std::invalid_argument("add: shape mismatch");
    }
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (const Var& v : xs) ints_.push_back(v.id());
    Var out = push(Op::AddN, first.rows, first.cols);
    Node& n = nodes_.back();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(xs.size());
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int32_t k = 0; k < n.ints_len; ++k) {
        const double* x = val(nodes_[static_cast<size_t>(ints_[static_cast<size_t>(ofs + k)])]);
        for (int64_t i = 0; i < count; ++i) z[i] += x[i];
    }
    finite_check(n);
    return out;
}

Var Tape::sub(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) throw std::invalid_argument("sub: shape mismatch");
    Var out = push(Op::Sub, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = x[i] - y[i];
    finite_check(n);
    return out;
}

Var Tape::mul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) throw std::invalid_argument("mul: shape mismatch");
    Var out = push(Op::Mul, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = x[i] * y[i];
    finite_check(n);
    return out;
}

Var Tape::neg(Var a) {
    const Node& na = node(a);
    Var out = push(Op::Neg, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = -x[i];
    finite_check(n);
    return out;
}

Var Tape::scale(Var a, double s) {
    const Node& na = node(a);
    Var out = push(Op::Scale, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    n.s0 = s;
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = s * x[i];
    finite_check(n);
    return out;
}

Var Tape::relu(Var a) {
    const Node& na = node(a);
    Var out = push(Op::Relu, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = x[i] > 0.0 ? x[i] : 0.0;
    finite_check(n);
    return out;
}

Var Tape::sigmoid(Var a) {
    const Node& na = node(a);
    Var out = push(Op::Sigmoid, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = stable_sigmoid(x[i]);
    finite_check(n);
    return out;
}

Var Tape::tanh_op(Var a) {
    const Node& na = node(a);
    Var out = push(Op::Tanh, na.rows, na.cols);
    Node& n = nodes_.back();
    n.a = a.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    double* z = val(n);
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    for (int64_t i = 0; i < count; ++i) z[i] = std::tanh(x[i]);
    finite_check(n);
    return out;
}

Var Tape::matmul(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.cols != nb.rows) throw std::invalid_argument("matmul: inner dimensions disagree");
    int64_t m = na.rows, k = na.cols, p = nb.cols;
    Var out = push(Op::Matmul, m, p);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double* z = val(n);
    for (int64_t i = 0; i < m; ++i) {
        const double* xi = x + i * k;
        double* zi = z + i * p;
        for (int64_t kk = 0; kk < k; ++kk) {
            double xv = xi[kk];
            if (xv == 0.0) continue;
            const double* yk = y + kk * p;
            for (int64_t j = 0; j < p; ++j) zi[j] += xv * yk[j];
        }
    }
    finite_check(n);
    return out;
}

Var Tape::matmul_t1(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows) throw std::invalid_argument("matmul_t1: leading dimensions disagree");
    int64_t k = na.rows, m = na.cols, p = nb.cols;
    Var out = push(Op::MatmulT1, m, p);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double* z = val(n);
    for (int64_t kk = 0; kk < k; ++kk) {
        const double* xk = x + kk * m;
        const double* yk = y + kk * p;
        for (int64_t i = 0; i < m; ++i) {
            double xv = xk[i];
            if (xv == 0.0) continue;
            double* zi = z + i * p;
            for (int64_t j = 0; j < p; ++j) zi[j] += xv * yk[j];
        }
    }
    finite_check(n);
    return out;
}

Var Tape::dot(Var a, Var b) {
    const Node& na = node(a);
    const Node& nb = node(b);
    if (na.rows != nb.rows || na.cols != nb.cols) throw std::invalid_argument("dot: shape mismatch");
    int64_t count = static_cast<int64_t>(na.rows) * na.cols;
    Var out = push(Op::Dot, 1, 1);
    Node& n = nodes_.back();
    n.a = a.id();
    n.b = b.id();
    const double* x = val(nodes_[static_cast<size_t>(a.id())]);
    const double* y = val(nodes_[static_cast<size_t>(b.id())]);
    double s = 0.0;
    for (int64_t i = 0; i < count; ++i) s += x[i] * y[i];
    *val(n) = s;
    finite_check(n);
    return out;
}

Var Tape::concat_cols(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("concat_cols: empty operand list");
    int64_t rows = node(xs[0]).rows;
    int64_t total_cols = 0;
    for (const Var& v : xs) {
        const Node& nv = node(v);
        if (nv.rows != rows) throw std::invalid_argument("concat_cols: row counts disagree");
        total_cols += nv.cols;
    }
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (const Var& v : xs) ints_.push_back(v.id());
    Var out = push(Op::ConcatCols, rows, total_cols);
    Node& n = nodes_.back();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(xs.size());
    double* z = val(n);
    int64_t col_base = 0;
    for (int32_t kidx = 0; kidx < n.ints_len; ++kidx) {
        const Node& nv = nodes_[static_cast<size_t>(ints_[static_cast<size_t>(ofs + kidx)])];
        const double* x = val(nv);
        for (int64_t r = 0; r < rows; ++r) {
            std::memcpy(z + r * total_cols + col_base, x + r * nv.cols,
                        sizeof(double) * static_cast<size_t>(nv.cols));
        }
        col_base += nv.cols;
    }
    finite_check(n);
    return out;
}

Var Tape::stack_rows(std::span<const Var> xs) {
    if (xs.empty()) throw std::invalid_argument("stack_rows: empty operand list");
    int64_t cols = node(xs[0]).cols;
    for (const Var& v : xs) {
        const Node& nv = node(v);
        if (nv.rows != 1 || nv.cols != cols) throw std::invalid_argument("stack_rows: operands must be [1,d]");
    }
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (const Var& v : xs) ints_.push_back(v.id());
    Var out = push(Op::StackRows, static_cast<int64_t>(xs.size()), cols);
    Node& n = nodes_.back();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(xs.size());
    double* z = val(n);
    for (int32_t k = 0; k < n.ints_len; ++k) {
        const Node& nv = nodes_[static_cast<size_t>(ints_[static_cast<size_t>(ofs + k)])];
        std::memcpy(z + static_cast<int64_t>(k) * cols, val(nv), sizeof(double) * static_cast<size_t>(cols));
    }
    finite_check(n);
    return out;
}

Var Tape::row(Var m, int64_t i) {
    const Node& nm = node(m);
    if (i < 0 || i >= nm.rows) throw std::invalid_argument("row: index out of range");
    int64_t cols = nm.cols;
    Var out = push(Op::Row, 1, cols);
    Node& n = nodes_.back();
    n.a = m.id();
    n.extra = static_cast<int32_t>(i);
    std::memcpy(val(n), val(nodes_[static_cast<size_t>(m.id())]) + i * cols,
                sizeof(double) * static_cast<size_t>(cols));
    finite_check(n);
    return out;
}

Var Tape::mean_rows(Var m) {
    int64_t rows = node(m).rows;
    int64_t cols = node(m).cols;
    Var out = push(Op::MeanRows, 1, cols);
    Node& n = nodes_.back();
    n.a = m.id();
    const double* x = val(nodes_[static_cast<size_t>(m.id())]);
    double* z = val(n);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) z[c] += x[r * cols + c];
    double inv = 1.0 / static_cast<double>(rows);
    for (int64_t c = 0; c < cols; ++c) z[c] *= inv;
    finite_check(n);
    return out;
}

Var Tape::gather_sum_rows(Var m, std::span<const int64_t> rows) {
    int64_t mrows = node(m).rows;
    int64_t cols = node(m).cols;
    if (rows.empty()) throw std::invalid_argument("gather_sum_rows: empty row list");
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (int64_t r : rows) {
        if (r < 0 || r >= mrows) throw std::invalid_argument("gather_sum_rows: index out of range");
        ints_.push_back(static_cast<int32_t>(r));
    }
    Var out = push(Op::GatherSumRows, 1, cols);
    Node& n = nodes_.back();
    n.a = m.id();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(rows.size());
    const double* x = val(nodes_[static_cast<size_t>(m.id())]);
    double* z = val(n);
    for (int32_t k = 0; k < n.ints_len; ++k) {
        const double* xr = x + static_cast<int64_t>(ints_[static_cast<size_t>(ofs + k)]) * cols;
        for (int64_t c = 0; c < cols; ++c) z[c] += xr[c];
    }
    finite_check(n);
    return out;
}

Var Tape::scatter_add_rows(Var m, std::span<const Var> vecs, std::span<const int64_t> rows) {
    int64_t mrows = node(m).rows;
    int64_t cols = node(m).cols;
    if (vecs.size() != rows.size()) throw std::invalid_argument("scatter_add_rows: list length mismatch");
    for (size_t k = 0; k < vecs.size(); ++k) {
        const Node& nv = node(vecs[k]);
        if (nv.rows != 1 || nv.cols != cols)
            throw std::invalid_argument("scatter_add_rows: vector shape mismatch");
        if (rows[k] < 0 || rows[k] >= mrows)
            throw std::invalid_argument("scatter_add_rows: index out of range");
    }
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (const Var& v : vecs) ints_.push_back(v.id());
    for (int64_t r : rows) ints_.push_back(static_cast<int32_t>(r));
    Var out = push(Op::ScatterAddRows, mrows, cols);
    Node& n = nodes_.back();
    n.a = m.id();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(vecs.size());
    double* z = val(n);
    std::memcpy(z, val(nodes_[static_cast<size_t>(m.id())]),
                sizeof(double) * static_cast<size_t>(mrows) * static_cast<size_t>(cols));
    for (int32_t k = 0; k < n.ints_len; ++k) {
        const Node& nv = nodes_[static_cast<size_t>(ints_[static_cast<size_t>(ofs + k)])];
        int64_t r = ints_[static_cast<size_t>(ofs + n.ints_len + k)];
        const double* x = val(nv);
        double* zr = z + r * cols;
        for (int64_t c = 0; c < cols; ++c) zr[c] += x[c];
    }
    finite_check(n);
    return out;
}

Var Tape::softmax(Var scores) {
    const Node& ns = node(scores);
    if (ns.rows != 1) throw std::invalid_argument("softmax: expects a [1,k] row");
    int64_t k = ns.cols;
    Var out = push(Op::Softmax, 1, k);
    Node& n = nodes_.back();
    n.a = scores.id();
    const double* x = val(nodes_[static_cast<size_t>(scores.id())]);
    double* z = val(n);
    double mx = x[0];
    for (int64_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    double sum = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        z[i] = std::exp(x[i] - mx);
        sum += z[i];
    }
    double inv = 1.0 / sum;
    for (int64_t i = 0; i < k; ++i) z[i] *= inv;
    finite_check(n);
    return out;
}

Var Tape::weighted_sum(Var weights, std::span<const Var> vecs) {
    const Node& nw = node(weights);
    if (nw.rows != 1 || nw.cols != static_cast<int64_t>(vecs.size()))
        throw std::invalid_argument("weighted_sum: weight count must match vector count");
    if (vecs.empty()) throw std::invalid_argument("weighted_sum: empty vector list");
    int64_t d = node(vecs[0]).cols;
    for (const Var& v : vecs) {
        const Node& nv = node(v);
        if (nv.rows != 1 || nv.cols != d) throw std::invalid_argument("weighted_sum: vector shape mismatch");
    }
    int32_t ofs = static_cast<int32_t>(ints_.size());
    for (const Var& v : vecs) ints_.push_back(v.id());
    Var out = push(Op::WeightedSum, 1, d);
    Node& n = nodes_.back();
    n.a = weights.id();
    n.ints_ofs = ofs;
    n.ints_len = static_cast<int32_t>(vecs.size());
    const double* w = val(nodes_[static_cast<size_t>(weights.id())]);
    double* z = val(n);
    for (int32_t k = 0; k < n.ints_len; ++k) {
        const double* x = val(nodes_[static_cast<size_t>(ints_[static_cast<size_t>(ofs + k)])]);
        double wk = w[k];
        for (int64_t c = 0; c < d; ++c) z[c] += wk * x[c];
    }
    finite_check(n);
    return out;
}

Var Tape::bce_mean(Var probs, std::span<const double> labels) {
    const Node& np = node(probs);
    int64_t count = static_cast<int64_t>(np.rows) * np.cols;
    if (np.rows != 1 && np.cols != 1) throw std::invalid_argument("bce_mean: expects a vector");
    if (count != static_cast<int64_t>(labels.size()))
        throw std::invalid_argument("bce_mean: label count mismatch");
    int32_t dofs = static_cast<int32_t>(dbls_.size());
    dbls_.insert(dbls_.end(), labels.begin(), labels.end());
    Var out = push(Op::BceMean, 1, 1);
    Node& n = nodes_.back();
    n.a = probs.id();
    n.dbls_ofs = dofs;
    n.dbls_len = static_cast<int32_t>(labels.size());
    const double* p = val(nodes_[static_cast<size_t>(probs.id())]);
    double loss = 0.0;
    for (int64_t i = 0; i < count; ++i) {
        double pi = std::min(std::max(p[i], kBceEps), 1.0 - kBceEps);
        double y = dbls_[static_cast<size_t>(dofs + i)];
        loss += -(y * std::log(pi) + (1.0 - y) * std::log(1.0 - pi));
    }
    *val(n) = loss / static_cast<double>(count);
    finite_check(n);
    return out;
}

Var Tape::batch_norm(Var x, Var gamma, Var beta, BatchNormBuffers* buffers, bool training,
                     double momentum, double eps) {
    const Node& nx = node(x);
    const Node& ng = node(gamma);
    const Node& nb = node(beta);
    int64_t rows = nx.rows, cols = nx.cols;
    if (ng.rows != 1 || ng.cols != cols || nb.rows != 1 || nb.cols != cols)
        throw std::invalid_argument("batch_norm: scale/shift must be [1,channels]");
    if (buffers == nullptr) throw std::invalid_argument("batch_norm: missing running-stat buffers");
    if (buffers->mean.size() != static_cast<size_t>(cols)) buffers->init(cols);

    // saved per-channel stats for backward: mean, var (batch or running)
    int32_t dofs = static_cast<int32_t>(dbls_.size());
    dbls_.resize(dbls_.size() + 2 * static_cast<size_t>(cols), 0.0);

    int32_t bn_ref = static_cast<int32_t>(bn_refs_.size());
    bn_refs_.push_back(buffers);

    Var out = push(Op::BatchNorm, rows, cols);
    Node& n = nodes_.back();
    n.a = x.id();
    n.b = gamma.id();
    n.c = beta.id();
    n.dbls_ofs = dofs;
    n.dbls_len = static_cast<int32_t>(2 * cols);
    n.extra = bn_ref;
    n.s0 = eps;
    n.s1 = training ? 1.0 : 0.0;

    const double* xv = val(nodes_[static_cast<size_t>(x.id())]);
    const double* gv = val(nodes_[static_cast<size_t>(gamma.id())]);
    const double* bv = val(nodes_[static_cast<size_t>(beta.id())]);
    double* z = val(n);
    double* mean = dbls_.data() + dofs;
    double* var = mean + cols;

    if (training) {
        double inv_n = 1.0 / static_cast<double>(rows);
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) mean[c] += xv[r * cols + c];
        for (int64_t c = 0; c < cols; ++c) mean[c] *= inv_n;
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < cols; ++c) {
                double d = xv[r * cols + c] - mean[c];
                var[c] += d * d;
            }
        for (int64_t c = 0; c < cols; ++c) var[c] *= inv_n;
        for (int64_t c = 0; c < cols; ++c) {
            buffers->mean[static_cast<size_t>(c)] =
                momentum * buffers->mean[static_cast<size_t>(c)] + (1.0 - momentum) * mean[c];
            buffers->var[static_cast<size_t>(c)] =
                momentum * buffers->var[static_cast<size_t>(c)] + (1.0 - momentum) * var[c];
        }
    } else {
        for (int64_t c = 0; c < cols; ++c) {
            mean[c] = buffers->mean[static_cast<size_t>(c)];
            var[c] = buffers->var[static_cast<size_t>(c)];
        }
    }
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
            double xhat = (xv[r * cols + c] - mean[c]) / std::sqrt(var[c] + eps);
            z[r * cols + c] = gv[c] * xhat + bv[c];
        }
    }
    finite_check(n);
    return out;
}

Var Tape::dropout(Var x, double rate, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must lie in [0,1)");
    const Node& nx = node(x);
    int64_t count = static_cast<int64_t>(nx.rows) * nx.cols;
    int32_t dofs = static_cast<int32_t>(dbls_.size());
    double keep_scale = 1.0 / (1.0 - rate);
    for (int64_t i = 0; i < count; ++i) {
        dbls_.push_back(rng.uniform() >= rate ? keep_scale : 0.0);
    }
    Var out = push(Op::Dropout, nx.rows, nx.cols);
    Node& n = nodes_.back();
    n.a = x.id();
    n.dbls_ofs = dofs;
    n.dbls_len = static_cast<int32_t>(count);
    const double* xv = val(nodes_[static_cast<size_t>(x.id())]);
    double* z = val(n);
    for (int64_t i = 0; i < count; ++i) z[i] = xv[i] * dbls_[static_cast<size_t>(dofs + i)];
    finite_check(n);
    return out;
}

std::span<const double> Tape::value(Var v) const {
    const Node& n = node(v);
    return {values_.data() + n.buf, static_cast<size_t>(n.rows) * static_cast<size_t>(n.cols)};
}

std::span<const double> Tape::grad(Var v) const {
    const Node& n = node(v);
    if (grads_.size() < values_.size()) throw std::logic_error("grad requested before backward");
    return {grads_.data() + n.buf, static_cast<size_t>(n.rows) * static_cast<size_t>(n.cols)};
}

Tensor Tape::value_tensor(Var v) const {
    const Node& n = node(v);
    auto s = value(v);
    return Tensor({n.rows, n.cols}, std::vector<double>(s.begin(), s.end()));
}

Tensor Tape::grad_tensor(Var v) const {
    const Node& n = node(v);
    auto s = grad(v);
    return Tensor({n.rows, n.cols}, std::vector<double>(s.begin(), s.end()));
}

int64_t Tape::rows(Var v) const { return node(v).rows; }
int64_t Tape::cols(Var v) const { return node(v).cols; }

void Tape::reset() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
    ints_.clear();
    dbls_.clear();
    bn_refs_.clear();
}

void Tape::backward(Var output) {
    const Node& out_node = node(output);
    if (out_node.rows != 1 || out_node.cols != 1)
        throw std::invalid_argument("backward: output must be a scalar");
    grads_.assign(values_.size(), 0.0);
    grads_[static_cast<size_t>(out_node.buf)] = 1.0;
    // nodes recorded after the output cannot influence it
    for (int32_t i = output.id(); i >= 0; --i) {
        backward_node(nodes_[static_cast<size_t>(i)]);
    }
}

void Tape::backward_node(const Node& n) {
    int64_t count = static_cast<int64_t>(n.rows) * n.cols;
    const double* gz = grads_.data() + n.buf;
    auto parent = [&](int32_t id) -> Node& { return nodes_[static_cast<size_t>(id)]; };
    auto pgrad = [&](int32_t id) -> double* { return grads_.data() + parent(id).buf; };
    auto pval = [&](int32_t id) -> const double* { return values_.data() + parent(id).buf; };
    auto skip = [&](int32_t id) -> bool { return parent(id).is_const; };

    switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::Add: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i];
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t i = 0; i < count; ++i) gb[i] += gz[i];
            }
            break;
        }
        case Op::AddN: {
            for (int32_t k = 0; k < n.ints_len; ++k) {
                int32_t id = ints_[static_cast<size_t>(n.ints_ofs + k)];
                if (skip(id)) continue;
                double* g = pgrad(id);
                for (int64_t i = 0; i < count; ++i) g[i] += gz[i];
            }
            break;
        }
        case Op::Sub: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i];
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t i = 0; i < count; ++i) gb[i] -= gz[i];
            }
            break;
        }
        case Op::Mul: {
            const double* xa = pval(n.a);
            const double* xb = pval(n.b);
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i] * xb[i];
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t i = 0; i < count; ++i) gb[i] += gz[i] * xa[i];
            }
            break;
        }
        case Op::Neg: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] -= gz[i];
            }
            break;
        }
        case Op::Scale: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += n.s0 * gz[i];
            }
            break;
        }
        case Op::Relu: {
            if (!skip(n.a)) {
                const double* z = values_.data() + n.buf;
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i)
                    if (z[i] > 0.0) ga[i] += gz[i];
            }
            break;
        }
        case Op::Sigmoid: {
            if (!skip(n.a)) {
                const double* z = values_.data() + n.buf;
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i] * z[i] * (1.0 - z[i]);
            }
            break;
        }
        case Op::Tanh: {
            if (!skip(n.a)) {
                const double* z = values_.data() + n.buf;
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i] * (1.0 - z[i] * z[i]);
            }
            break;
        }
        case Op::Matmul: {
            const Node& na = parent(n.a);
            const Node& nb = parent(n.b);
            int64_t m = na.rows, k = na.cols, p = nb.cols;
            const double* xa = pval(n.a);
            const double* xb = pval(n.b);
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < m; ++i) {
                    const double* gzi = gz + i * p;
                    double* gai = ga + i * k;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const double* bk = xb + kk * p;
                        double s = 0.0;
                        for (int64_t j = 0; j < p; ++j) s += gzi[j] * bk[j];
                        gai[kk] += s;
                    }
                }
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t i = 0; i < m; ++i) {
                    const double* xi = xa + i * k;
                    const double* gzi = gz + i * p;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        double xv = xi[kk];
                        if (xv == 0.0) continue;
                        double* gbk = gb + kk * p;
                        for (int64_t j = 0; j < p; ++j) gbk[j] += xv * gzi[j];
                    }
                }
            }
            break;
        }
        case Op::MatmulT1: {
            const Node& na = parent(n.a);
            const Node& nb = parent(n.b);
            int64_t k = na.rows, m = na.cols, p = nb.cols;
            const double* xa = pval(n.a);
            const double* xb = pval(n.b);
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double* bk = xb + kk * p;
                    double* gak = ga + kk * m;
                    for (int64_t i = 0; i < m; ++i) {
                        const double* gzi = gz + i * p;
                        double s = 0.0;
                        for (int64_t j = 0; j < p; ++j) s += gzi[j] * bk[j];
                        gak[i] += s;
                    }
                }
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double* ak = xa + kk * m;
                    double* gbk = gb + kk * p;
                    for (int64_t i = 0; i < m; ++i) {
                        double xv = ak[i];
                        if (xv == 0.0) continue;
                        const double* gzi = gz + i * p;
                        for (int64_t j = 0; j < p; ++j) gbk[j] += xv * gzi[j];
                    }
                }
            }
            break;
        }
        case Op::Dot: {
            const Node& na = parent(n.a);
            int64_t cn = static_cast<int64_t>(na.rows) * na.cols;
            double g = gz[0];
            const double* xa = pval(n.a);
            const double* xb = pval(n.b);
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < cn; ++i) ga[i] += g * xb[i];
            }
            if (!skip(n.b)) {
                double* gb = pgrad(n.b);
                for (int64_t i = 0; i < cn; ++i) gb[i] += g * xa[i];
            }
            break;
        }
        case Op::ConcatCols: {
            int64_t col_base = 0;
            for (int32_t k = 0; k < n.ints_len; ++k) {
                int32_t id = ints_[static_cast<size_t>(n.ints_ofs + k)];
                const Node& nv = parent(id);
                if (!skip(id)) {
                    double* g = pgrad(id);
                    for (int64_t r = 0; r < n.rows; ++r)
                        for (int64_t c = 0; c < nv.cols; ++c)
                            g[r * nv.cols + c] += gz[r * n.cols + col_base + c];
                }
                col_base += nv.cols;
            }
            break;
        }
        case Op::StackRows: {
            for (int32_t k = 0; k < n.ints_len; ++k) {
                int32_t id = ints_[static_cast<size_t>(n.ints_ofs + k)];
                if (skip(id)) continue;
                double* g = pgrad(id);
                const double* gzr = gz + static_cast<int64_t>(k) * n.cols;
                for (int64_t c = 0; c < n.cols; ++c) g[c] += gzr[c];
            }
            break;
        }
        case Op::Row: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a) + static_cast<int64_t>(n.extra) * n.cols;
                for (int64_t c = 0; c < n.cols; ++c) ga[c] += gz[c];
            }
            break;
        }
        case Op::MeanRows: {
            if (!skip(n.a)) {
                const Node& na = parent(n.a);
                double inv = 1.0 / static_cast<double>(na.rows);
                double* ga = pgrad(n.a);
                for (int64_t r = 0; r < na.rows; ++r)
                    for (int64_t c = 0; c < n.cols; ++c) ga[r * n.cols + c] += inv * gz[c];
            }
            break;
        }
        case Op::GatherSumRows: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int32_t k = 0; k < n.ints_len; ++k) {
                    int64_t r = ints_[static_cast<size_t>(n.ints_ofs + k)];
                    double* gar = ga + r * n.cols;
                    for (int64_t c = 0; c < n.cols; ++c) gar[c] += gz[c];
                }
            }
            break;
        }
        case Op::ScatterAddRows: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i];
            }
            for (int32_t k = 0; k < n.ints_len; ++k) {
                int32_t id = ints_[static_cast<size_t>(n.ints_ofs + k)];
                if (skip(id)) continue;
                int64_t r = ints_[static_cast<size_t>(n.ints_ofs + n.ints_len + k)];
                double* g = pgrad(id);
                const double* gzr = gz + r * n.cols;
                for (int64_t c = 0; c < n.cols; ++c) g[c] += gzr[c];
            }
            break;
        }
        case Op::Softmax: {
            if (!skip(n.a)) {
                const double* z = values_.data() + n.buf;
                double* ga = pgrad(n.a);
                double dotv = 0.0;
                for (int64_t i = 0; i < n.cols; ++i) dotv += gz[i] * z[i];
                for (int64_t i = 0; i < n.cols; ++i) ga[i] += z[i] * (gz[i] - dotv);
            }
            break;
        }
        case Op::WeightedSum: {
            const double* w = pval(n.a);
            double* gw = skip(n.a) ? nullptr : pgrad(n.a);
            for (int32_t k = 0; k < n.ints_len; ++k) {
                int32_t id = ints_[static_cast<size_t>(n.ints_ofs + k)];
                const double* x = pval(id);
                if (gw != nullptr) {
                    double s = 0.0;
                    for (int64_t c = 0; c < n.cols; ++c) s += gz[c] * x[c];
                    gw[k] += s;
                }
                if (!skip(id)) {
                    double* g = pgrad(id);
                    double wk = w[k];
                    for (int64_t c = 0; c < n.cols; ++c) g[c] += wk * gz[c];
                }
            }
            break;
        }
        case Op::BceMean: {
            if (!skip(n.a)) {
                const Node& na = parent(n.a);
                int64_t cn = static_cast<int64_t>(na.rows) * na.cols;
                const double* p = pval(n.a);
                double* gp = pgrad(n.a);
                double g = gz[0] / static_cast<double>(cn);
                for (int64_t i = 0; i < cn; ++i) {
                    double pi = std::min(std::max(p[i], kBceEps), 1.0 - kBceEps);
                    double y = dbls_[static_cast<size_t>(n.dbls_ofs + i)];
                    gp[i] += g * (pi - y) / (pi * (1.0 - pi));
                }
            }
            break;
        }
        case Op::BatchNorm: {
            const Node& na = parent(n.a);
            int64_t rows = na.rows, cols = na.cols;
            const double* xv = pval(n.a);
            const double* gv = pval(n.b);
            const double* mean = dbls_.data() + n.dbls_ofs;
            const double* var = mean + cols;
            double eps = n.s0;
            bool training = n.s1 != 0.0;
            for (int64_t c = 0; c < cols; ++c) {
                double inv_std = 1.0 / std::sqrt(var[c] + eps);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (int64_t r = 0; r < rows; ++r) {
                    double dy = gz[r * cols + c];
                    double xhat = (xv[r * cols + c] - mean[c]) * inv_std;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
                if (!skip(n.b)) (pgrad(n.b))[c] += sum_dy_xhat;
                if (!skip(n.c)) (pgrad(n.c))[c] += sum_dy;
                if (!skip(n.a)) {
                    double* ga = pgrad(n.a);
                    double gamma = gv[c];
                    if (training) {
                        double inv_n = 1.0 / static_cast<double>(rows);
                        for (int64_t r = 0; r < rows; ++r) {
                            double dy = gz[r * cols + c];
                            double xhat = (xv[r * cols + c] - mean[c]) * inv_std;
                            ga[r * cols + c] +=
                                gamma * inv_std * (dy - inv_n * sum_dy - xhat * inv_n * sum_dy_xhat);
                        }
                    } else {
                        for (int64_t r = 0; r < rows; ++r)
                            ga[r * cols + c] += gz[r * cols + c] * gamma * inv_std;
                    }
                }
            }
            break;
        }
        case Op::Dropout: {
            if (!skip(n.a)) {
                double* ga = pgrad(n.a);
                const double* mask = dbls_.data() + n.dbls_ofs;
                for (int64_t i = 0; i < count; ++i) ga[i] += gz[i] * mask[i];
            }
            break;
        }
    }
}

std::vector<Tensor> grad(Tape& tape, Var output, std::span<const Var> params) {
    tape.backward(output);
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Var& p : params) out.push_back(tape.grad_tensor(p));
    return out;
}

}  // namespace relgraph
