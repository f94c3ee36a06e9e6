#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/ops.hpp"
#include "relgraph/optim.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tape.hpp"

using namespace relgraph;

TEST_CASE("softmax: uniform logits give uniform weights") {
    std::vector<double> logits = {0.0, 0.0, 0.0};
    std::vector<int64_t> group = {0, 1, 2};
    auto w = softmax_over_group(logits, group);
    for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax: singleton group") {
    std::vector<double> logits = {4.2};
    std::vector<int64_t> group = {0};
    auto w = softmax_over_group(logits, group);
    CHECK(w.size() == 1);
    CHECK(w[0] == doctest::Approx(1.0));
}

TEST_CASE("softmax: exp-normalize of ln 1, ln 2, ln 3") {
    std::vector<double> logits = {std::log(1.0), std::log(2.0), std::log(3.0)};
    std::vector<int64_t> group = {0, 1, 2};
    auto w = softmax_over_group(logits, group);
    CHECK(w[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(w[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(w[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("softmax: empty group rejected") {
    std::vector<double> logits = {1.0};
    CHECK_THROWS_WITH_AS(softmax_over_group(logits, {}), "empty normalization set",
                         std::invalid_argument);
}

TEST_CASE("softmax: probability vector for extreme magnitudes, many seeds") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        RngStream rng(seed);
        int64_t n = 1 + rng.uniform_int(12);
        std::vector<double> logits(static_cast<size_t>(n));
        for (double& v : logits) v = rng.uniform(-1e3, 1e3);
        std::vector<int64_t> group;
        for (int64_t i = 0; i < n; ++i)
            if (rng.bernoulli(0.7)) group.push_back(i);
        if (group.empty()) group.push_back(0);
        auto w = softmax_over_group(logits, group);
        double sum = 0.0;
        for (double v : w) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("grad: square function matches central differences") {
    Tape tape;
    Var x = tape.leaf(Tensor::scalar(3.0));
    Var y = tape.mul(x, x);
    tape.backward(y);
    double analytic = tape.grad(x)[0];
    CHECK(analytic == doctest::Approx(6.0).epsilon(1e-12));
    double fd = oracles::central_difference([](double v) { return v * v; }, 3.0, 1e-5);
    CHECK(oracles::rel_error(analytic, fd) < 1e-6);
}

TEST_CASE("grad: parameters off the path get zero gradients") {
    Tape tape;
    Var used = tape.leaf(Tensor::scalar(2.0));
    Var unused = tape.leaf(Tensor::row({1.0, 2.0, 3.0}));
    Var y = tape.mul(used, used);
    std::vector<Var> params = {used, unused};
    auto grads = grad(tape, y, params);
    CHECK(grads[0][0] == doctest::Approx(4.0));
    for (int64_t i = 0; i < grads[1].numel(); ++i) CHECK(grads[1][i] == 0.0);
}

TEST_CASE("grad: non-scalar output rejected") {
    Tape tape;
    Var x = tape.leaf(Tensor::row({1.0, 2.0}));
    CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

namespace {

// finite-difference check harness over a tape-building function
void check_tape_gradients(std::vector<Tensor> init,
                          const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                          double tol = 1e-4) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : init) leaves.push_back(tape.leaf(t));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (Var v : leaves) analytic.push_back(tape.grad_tensor(v));

    auto eval = [&](const std::vector<Tensor>& params) {
        Tape t2;
        std::vector<Var> l2;
        for (const Tensor& t : params) l2.push_back(t2.leaf(t));
        return t2.value_scalar(build(t2, l2));
    };
    double err = oracles::max_gradient_error(init, eval, analytic);
    CHECK(err < tol);
}

Tensor random_tensor(std::vector<int64_t> shape, RngStream& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
    return t;
}

}  // namespace

TEST_CASE("grad: every tape primitive matches central differences") {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        RngStream rng(seed);
        Tensor a = random_tensor({2, 3}, rng);
        Tensor b = random_tensor({2, 3}, rng);
        Tensor w = random_tensor({3, 2}, rng);
        Tensor v1 = random_tensor({1, 3}, rng);
        Tensor v2 = random_tensor({1, 3}, rng);
        Tensor weights = random_tensor({1, 2}, rng);
        Tensor gamma = random_tensor({1, 3}, rng);
        Tensor beta = random_tensor({1, 3}, rng);

        check_tape_gradients({a, b, w}, [](Tape& t, const std::vector<Var>& p) {
            Var sum = t.add(p[0], p[1]);
            Var diff = t.sub(p[0], p[1]);
            Var prod = t.mul(sum, diff);
            Var mm = t.matmul(t.relu(prod), p[2]);       // [2,2]
            Var mt = t.matmul_t1(p[0], t.sigmoid(p[1]));  // [3,3]
            Var s1 = t.mean_rows(mm);
            Var s2 = t.dot(t.tanh_op(t.row(mt, 1)), t.row(mt, 2));
            std::array<Var, 2> cat = {s1, s2};
            Var flat = t.concat_cols(cat);  // [1,3]
            return t.dot(t.softmax(flat), t.neg(t.scale(flat, 0.5)));
        });

        check_tape_gradients({v1, v2, weights}, [](Tape& t, const std::vector<Var>& p) {
            std::array<Var, 2> vecs = {t.relu(p[0]), t.tanh_op(p[1])};
            Var ws = t.weighted_sum(p[2], vecs);
            std::array<Var, 2> stack = {ws, p[0]};
            Var m = t.stack_rows(stack);
            Var g = t.gather_sum_rows(m, std::array<int64_t, 3>{0, 1, 0});
            std::array<Var, 2> adds = {t.sigmoid(p[1])};
            adds[1] = t.mul(p[0], p[1]);
            std::array<int64_t, 2> rows = {1, 0};
            Var sc = t.scatter_add_rows(m, adds, rows);
            return t.add(t.dot(g, g), t.dot(t.mean_rows(sc), t.row(sc, 0)));
        });

        check_tape_gradients({a, gamma, beta}, [](Tape& t, const std::vector<Var>& p) {
            BatchNormBuffers buffers;
            buffers.init(3);
            Var y = t.batch_norm(p[0], p[1], p[2], &buffers, true);
            std::vector<double> labels = {1.0, 0.0, 1.0};
            return t.bce_mean(t.sigmoid(t.mean_rows(y)), labels);
        });
    }
}

TEST_CASE("grad: dropout backward uses the stored mask") {
    RngStream data_rng(5);
    Tensor x = random_tensor({2, 4}, data_rng);
    auto build = [](Tape& t, const std::vector<Var>& p) {
        RngStream rng(99);
        Var d = t.dropout(p[0], 0.5, rng);
        return t.dot(d, d);
    };
    check_tape_gradients({x}, build);
}

TEST_CASE("adam: defaults and identity on zero gradients") {
    AdamConfig cfg;
    CHECK(cfg.lr == doctest::Approx(0.001));
    std::vector<Tensor> params = {Tensor::row({1.0, -2.0, 3.0})};
    std::vector<Tensor> grads = {Tensor::zeros({1, 3})};
    AdamState state;
    adam_step(params, grads, state, cfg);
    CHECK(params[0][0] == 1.0);
    CHECK(params[0][1] == -2.0);
    CHECK(params[0][2] == 3.0);
    CHECK(state.step == 1);
}

TEST_CASE("adam: first step moves by about -lr * sign(g)") {
    AdamConfig cfg;
    std::vector<Tensor> params = {Tensor::scalar(0.7)};
    std::vector<Tensor> grads = {Tensor::scalar(2.5)};  // eps=1e-8 is far below |g|
    AdamState state;
    adam_step(params, grads, state, cfg);
    double delta = params[0][0] - 0.7;
    CHECK(std::abs(delta + cfg.lr) < 1e-6 * cfg.lr);

    params = {Tensor::scalar(0.7)};
    grads = {Tensor::scalar(-0.03)};
    AdamState s2;
    adam_step(params, grads, s2, cfg);
    delta = params[0][0] - 0.7;
    CHECK(std::abs(delta - cfg.lr) < 1e-6 * cfg.lr);
}

TEST_CASE("adam: shape mismatch rejected") {
    AdamConfig cfg;
    std::vector<Tensor> params = {Tensor::row({1.0, 2.0})};
    std::vector<Tensor> grads = {Tensor::row({1.0, 2.0, 3.0})};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, grads, state, cfg), std::invalid_argument);
}

TEST_CASE("lr schedule: stated decay values") {
    CHECK(lr_at(0) == doctest::Approx(0.001).epsilon(1e-12));
    CHECK(lr_at(10) == doctest::Approx(0.0008).epsilon(1e-12));
    CHECK(lr_at(25) == doctest::Approx(0.00064).epsilon(1e-9));
}

TEST_CASE("lr schedule: non-increasing, piecewise constant with period 10") {
    double prev = lr_at(0);
    for (int64_t e = 1; e <= 100; ++e) {
        double cur = lr_at(e);
        CHECK(cur <= prev + 1e-18);
        if (e % 10 != 0) CHECK(cur == lr_at(e - 1));
        prev = cur;
    }
}

TEST_CASE("dropout: rate zero and evaluation mode are identities") {
    RngStream rng(3);
    Tensor x = random_tensor({3, 3}, rng);
    RngStream d1(7);
    Tensor y = dropout(x, 0.0, d1, true);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

    RngStream d2(7);
    uint64_t before = d2.counter();
    Tensor z = dropout(x, 0.7, d2, false);
    CHECK(d2.counter() == before);  // evaluation consumes no randomness
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(z[i] == x[i]);
}

TEST_CASE("dropout: mask replays the seeded stream, survivors scaled by 2") {
    RngStream rng(11);
    Tensor x = Tensor::full({2, 4}, 1.0);
    RngStream stream(123);
    Tensor y = dropout(x, 0.5, stream, true);

    RngStream oracle(123);
    for (int64_t i = 0; i < x.numel(); ++i) {
        bool keep = oracle.uniform() >= 0.5;
        CHECK(y[i] == (keep ? 2.0 : 0.0));
    }
}

TEST_CASE("dropout: rate of 1 rejected") {
    RngStream rng(1);
    Tensor x = Tensor::full({1, 2}, 1.0);
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), std::invalid_argument);
}

TEST_CASE("batch_norm: constant batch collapses to the shift") {
    Tensor x = Tensor::full({4, 2}, 3.7);
    Tensor scale = Tensor::full({1, 2}, 1.4);
    Tensor shift = Tensor::row({0.25, -1.5});
    BatchNormBuffers buffers;
    Tensor y = batch_norm(x, scale, shift, buffers, true);
    for (int64_t r = 0; r < 4; ++r) {
        CHECK(y.at(r, 0) == doctest::Approx(0.25).epsilon(1e-9));
        CHECK(y.at(r, 1) == doctest::Approx(-1.5).epsilon(1e-9));
    }
}

TEST_CASE("batch_norm: two-point batch hits the closed form") {
    Tensor x({2, 1}, {-1.0, 1.0});
    Tensor scale = Tensor::full({1, 1}, 1.0);
    Tensor shift = Tensor::zeros({1, 1});
    BatchNormBuffers buffers;
    Tensor y = batch_norm(x, scale, shift, buffers, true);
    double expected = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0] == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("batch_norm: evaluation applies hand-computed running stats") {
    Tensor x({2, 1}, {2.0, 6.0});  // batch mean 4, biased variance 4
    Tensor scale = Tensor::full({1, 1}, 1.0);
    Tensor shift = Tensor::zeros({1, 1});
    BatchNormBuffers buffers;
    buffers.init(1);
    batch_norm(x, scale, shift, buffers, true);
    // running = 0.9 * init + 0.1 * batch
    double rm = 0.9 * 0.0 + 0.1 * 4.0;
    double rv = 0.9 * 1.0 + 0.1 * 4.0;
    CHECK(buffers.mean[0] == doctest::Approx(rm).epsilon(1e-12));
    CHECK(buffers.var[0] == doctest::Approx(rv).epsilon(1e-12));

    Tensor probe({1, 1}, {3.0});
    Tensor out = batch_norm(probe, scale, shift, buffers, false);
    CHECK(out[0] == doctest::Approx((3.0 - rm) / std::sqrt(rv + 1e-5)).epsilon(1e-12));
}

TEST_CASE("bce_loss: names its values") {
    std::vector<double> half = {0.5, 0.5, 0.5};
    std::vector<double> labels = {1.0, 0.0, 1.0};
    CHECK(bce_loss(half, labels) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    std::vector<double> close = {0.999999999, 1e-9};
    std::vector<double> exact = {1.0, 0.0};
    CHECK(bce_loss(close, exact) < 1e-8);

    std::vector<double> p = {0.9};
    std::vector<double> y = {1.0};
    CHECK(bce_loss(p, y) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK(bce_loss(p, y) == doctest::Approx(0.10536).epsilon(1e-4));

    std::vector<double> mismatched = {0.5};
    CHECK_THROWS_AS(bce_loss(mismatched, labels), std::invalid_argument);
}

TEST_CASE("clip_global_norm: scales only above the limit") {
    std::vector<Tensor> grads = {Tensor::row({3.0, 4.0})};  // norm 5
    double norm = clip_global_norm(grads, 5.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(grads[0][0] == doctest::Approx(3.0));

    grads = {Tensor::row({30.0, 40.0})};  // norm 50
    norm = clip_global_norm(grads, 5.0);
    CHECK(norm == doctest::Approx(50.0));
    CHECK(grads[0][0] == doctest::Approx(3.0));
    CHECK(grads[0][1] == doctest::Approx(4.0));
}

TEST_CASE("rng: equal seed and counter replay identical draws") {
    RngStream a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    RngStream c(42);
    c.uniform();
    CHECK(c.counter() == 1);
    RngStream child1 = RngStream(9).fork(4);
    RngStream child2 = RngStream(9).fork(4);
    CHECK(child1.next_u64() == child2.next_u64());
    RngStream other = RngStream(9).fork(5);
    CHECK(child1.next_u64() != other.next_u64());
}

TEST_CASE("tape: identical op sequences are bitwise identical") {
    auto run = [] {
        Tape tape;
        RngStream rng(5);
        Var x = tape.leaf(random_tensor({3, 3}, rng));
        Var y = tape.sigmoid(tape.matmul(x, x));
        Var loss = tape.dot(y, y);
        tape.backward(loss);
        std::vector<double> out(tape.value(loss).begin(), tape.value(loss).end());
        auto g = tape.grad(x);
        out.insert(out.end(), g.begin(), g.end());
        return out;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}
