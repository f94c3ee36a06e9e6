#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "relgraph/encoders.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/kg.hpp"

using namespace relgraph;
using encoders::EmbeddingTable;

namespace {

kg::KnowledgeGraph toy_kg(int64_t entities, int64_t relations, int64_t triples, uint64_t seed) {
    kg::KnowledgeGraph graph;
    for (int64_t i = 0; i < entities; ++i) graph.intern_entity("e" + std::to_string(i));
    for (int64_t i = 0; i < relations; ++i) graph.intern_relation("rel" + std::to_string(i));
    RngStream rng(seed);
    int64_t added = 0;
    while (added < triples) {
        int64_t s = rng.uniform_int(entities), o = rng.uniform_int(entities);
        if (s == o) continue;
        if (graph.add_triple(s, rng.uniform_int(relations), o)) ++added;
    }
    return graph;
}

// mean margin violation over every single-endpoint corruption
double corruption_loss(const kg::KnowledgeGraph& graph, const encoders::TranseTables& tables,
                       double margin) {
    double total = 0.0;
    int64_t count = 0;
    for (const kg::Triple& t : graph.triples()) {
        const Tensor& s = tables.entities.vectors[static_cast<size_t>(t.subject)];
        const Tensor& r = tables.relations.vectors[static_cast<size_t>(t.relation)];
        const Tensor& o = tables.entities.vectors[static_cast<size_t>(t.object)];
        double pos = encoders::transe_energy(s, r, o);
        for (int64_t e = 0; e < graph.num_entities(); ++e) {
            if (e != t.subject) {
                double neg = encoders::transe_energy(tables.entities.vectors[static_cast<size_t>(e)], r, o);
                total += std::max(0.0, margin + pos - neg);
                ++count;
            }
            if (e != t.object) {
                double neg = encoders::transe_energy(s, r, tables.entities.vectors[static_cast<size_t>(e)]);
                total += std::max(0.0, margin + pos - neg);
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double ranking_accuracy(const kg::KnowledgeGraph& graph, const encoders::TranseTables& tables) {
    int64_t wins = 0, total = 0;
    for (const kg::Triple& t : graph.triples()) {
        const Tensor& s = tables.entities.vectors[static_cast<size_t>(t.subject)];
        const Tensor& r = tables.relations.vectors[static_cast<size_t>(t.relation)];
        const Tensor& o = tables.entities.vectors[static_cast<size_t>(t.object)];
        double pos = encoders::transe_energy(s, r, o);
        for (int64_t e = 0; e < graph.num_entities(); ++e) {
            if (e != t.subject) {
                ++total;
                if (pos < encoders::transe_energy(tables.entities.vectors[static_cast<size_t>(e)], r, o))
                    ++wins;
            }
            if (e != t.object) {
                ++total;
                if (pos < encoders::transe_energy(s, r, tables.entities.vectors[static_cast<size_t>(e)]))
                    ++wins;
            }
        }
    }
    return static_cast<double>(wins) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("embedding table: save/load round trip and OOV fallback") {
    EmbeddingTable table;
    table.dim = 3;
    table.oov = Tensor::row({9.0, 9.0, 9.0});
    table.add("apple", Tensor::row({1.0, 2.0, 3.0}));
    table.add("pear", Tensor::row({-1.5, 0.25, 0.0}));
    auto dir = std::filesystem::temp_directory_path() / "relgraph_tests" / "emb";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "table.txt").string();
    encoders::save_embeddings(table, path);
    EmbeddingTable loaded = encoders::load_embeddings(path);
    CHECK(loaded.dim == 3);
    CHECK(loaded.lookup("apple")[1] == doctest::Approx(2.0));
    CHECK(loaded.lookup("missing")[0] == doctest::Approx(9.0));
    CHECK(loaded.lookup_id("missing") == -1);
}

TEST_CASE("word table: deterministic, deduplicated, uniform dimension") {
    std::vector<std::string> vocab = {"a", "b", "a", "c"};
    RngStream r1(5), r2(5);
    EmbeddingTable t1 = encoders::build_word_table(vocab, 8, r1);
    EmbeddingTable t2 = encoders::build_word_table(vocab, 8, r2);
    CHECK(t1.names.size() == 3);
    for (size_t i = 0; i < t1.names.size(); ++i)
        for (int64_t j = 0; j < 8; ++j) CHECK(t1.vectors[i][j] == t2.vectors[i][j]);
}

TEST_CASE("transe: zero epochs returns the seeded initialization") {
    kg::KnowledgeGraph graph = toy_kg(8, 2, 12, 3);
    encoders::TranseConfig cfg;
    cfg.dim = 4;
    cfg.epochs = 0;
    RngStream rng(99);
    auto tables = encoders::train_transe(graph, cfg, rng);

    // oracle: replay the same draw order (entities then relations,
    // uniform in +-6/sqrt(d), relations normalized once)
    RngStream oracle(99);
    double bound = 6.0 / std::sqrt(4.0);
    for (int64_t e = 0; e < graph.num_entities(); ++e)
        for (int64_t j = 0; j < 4; ++j)
            CHECK(tables.entities.vectors[static_cast<size_t>(e)][j] ==
                  doctest::Approx(oracle.uniform(-bound, bound)).epsilon(1e-15));
    for (int64_t r = 0; r < graph.num_relations(); ++r) {
        std::vector<double> raw(4);
        double sq = 0.0;
        for (double& x : raw) {
            x = oracle.uniform(-bound, bound);
            sq += x * x;
        }
        for (int64_t j = 0; j < 4; ++j)
            CHECK(tables.relations.vectors[static_cast<size_t>(r)][j] ==
                  doctest::Approx(raw[static_cast<size_t>(j)] / std::sqrt(sq)).epsilon(1e-12));
    }
}

TEST_CASE("transe: entity vectors sit on the unit sphere after training") {
    kg::KnowledgeGraph graph = toy_kg(12, 3, 30, 5);
    encoders::TranseConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 5;
    RngStream rng(4);
    auto tables = encoders::train_transe(graph, cfg, rng);
    for (const Tensor& v : tables.entities.vectors) {
        double sq = 0.0;
        for (int64_t j = 0; j < v.numel(); ++j) sq += v[j] * v[j];
        CHECK(std::abs(std::sqrt(sq) - 1.0) < 1e-9);
    }
}

TEST_CASE("transe: corruption loss non-increasing over coarse checkpoints, 5 seeds") {
    kg::KnowledgeGraph graph = toy_kg(20, 3, 60, 17);
    encoders::TranseConfig cfg;
    cfg.dim = 16;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        std::vector<double> losses;
        for (int64_t epochs : {0, 50, 200}) {
            encoders::TranseConfig c = cfg;
            c.epochs = epochs;
            RngStream rng(seed);
            auto tables = encoders::train_transe(graph, c, rng);
            losses.push_back(corruption_loss(graph, tables, c.margin));
        }
        CHECK(losses[1] <= losses[0] + 1e-9);
        CHECK(losses[2] <= losses[1] + 1e-9);
    }
}

TEST_CASE("transe: true triples outrank corruptions on the toy graph") {
    kg::KnowledgeGraph graph = toy_kg(20, 3, 60, 17);
    encoders::TranseConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 200;
    RngStream rng(1);
    auto tables = encoders::train_transe(graph, cfg, rng);
    CHECK(ranking_accuracy(graph, tables) >= 0.9);
}

namespace {

struct BoundEncoder {
    ParameterStore store;
    encoders::SeqEncoderParams params;
};

BoundEncoder make_encoder(int64_t input_dim, int64_t hidden, uint64_t seed) {
    BoundEncoder enc;
    RngStream rng(seed);
    enc.params = encoders::register_seq_encoder(enc.store, "encoder", input_dim, hidden, rng);
    return enc;
}

}  // namespace

TEST_CASE("encode_sequence: shapes and the single-token identity") {
    BoundEncoder enc = make_encoder(4, 3, 11);
    Tape tape;
    auto bound = bind_parameters(tape, enc.store);
    std::vector<Var> tokens = {tape.constant(Tensor::row({0.5, -1.0, 0.25, 2.0}))};
    auto out = encoders::encode_sequence(tape, tokens, enc.params, bound);
    REQUIRE(out.token_states.size() == 1);
    CHECK(tape.cols(out.global) == 6);
    auto state = tape.value(out.token_states[0]);
    auto global = tape.value(out.global);
    for (size_t i = 0; i < state.size(); ++i) CHECK(state[i] == global[i]);

    std::vector<Var> more = {tokens[0], tape.constant(Tensor::row({1.0, 1.0, -1.0, 0.0})),
                             tape.constant(Tensor::row({0.0, 2.0, 0.5, -0.5}))};
    auto out3 = encoders::encode_sequence(tape, more, enc.params, bound);
    CHECK(out3.token_states.size() == 3);
    for (const Var& s : out3.token_states) CHECK(tape.cols(s) == 6);

    std::vector<Var> empty;
    CHECK_THROWS_AS(encoders::encode_sequence(tape, empty, enc.params, bound), DataError);
}

TEST_CASE("encode_sequence: hidden size 1 matches the longhand scalar recurrence") {
    ParameterStore store;
    RngStream rng(3);
    auto params = encoders::register_seq_encoder(store, "encoder", 1, 1, rng);

    oracles::ScalarLstmParams fw = {0.4, -0.3, 0.1, 0.7, 0.2, -0.1, 1.1, -0.6, 0.05, -0.8, 0.3, 0.2};
    oracles::ScalarLstmParams bw = {-0.5, 0.6, 0.0, 0.3, -0.2, 0.15, 0.9, 0.4, -0.05, 0.25, -0.7, 0.1};
    auto assign = [&](const std::string& prefix, const oracles::ScalarLstmParams& p) {
        store.at(prefix + ".wx_i")[0] = p.wx_i;
        store.at(prefix + ".wh_i")[0] = p.wh_i;
        store.at(prefix + ".b_i")[0] = p.b_i;
        store.at(prefix + ".wx_f")[0] = p.wx_f;
        store.at(prefix + ".wh_f")[0] = p.wh_f;
        store.at(prefix + ".b_f")[0] = p.b_f;
        store.at(prefix + ".wx_g")[0] = p.wx_g;
        store.at(prefix + ".wh_g")[0] = p.wh_g;
        store.at(prefix + ".b_g")[0] = p.b_g;
        store.at(prefix + ".wx_o")[0] = p.wx_o;
        store.at(prefix + ".wh_o")[0] = p.wh_o;
        store.at(prefix + ".b_o")[0] = p.b_o;
    };
    assign("encoder.fw", fw);
    assign("encoder.bw", bw);

    std::vector<double> xs = {0.8, -1.2};
    Tape tape;
    auto bound = bind_parameters(tape, store);
    std::vector<Var> tokens = {tape.constant(Tensor::scalar(xs[0])), tape.constant(Tensor::scalar(xs[1]))};
    auto out = encoders::encode_sequence(tape, tokens, params, bound);

    auto fw_states = oracles::scalar_lstm(fw, xs);
    auto bw_states = oracles::scalar_lstm(bw, {xs[1], xs[0]});  // reversed input
    // token state t = [forward_t, backward_t]
    CHECK(tape.value(out.token_states[0])[0] == doctest::Approx(fw_states[0]).epsilon(1e-12));
    CHECK(tape.value(out.token_states[0])[1] == doctest::Approx(bw_states[1]).epsilon(1e-12));
    CHECK(tape.value(out.token_states[1])[0] == doctest::Approx(fw_states[1]).epsilon(1e-12));
    CHECK(tape.value(out.token_states[1])[1] == doctest::Approx(bw_states[0]).epsilon(1e-12));
    // global = [final forward, final backward]
    CHECK(tape.value(out.global)[0] == doctest::Approx(fw_states[1]).epsilon(1e-12));
    CHECK(tape.value(out.global)[1] == doctest::Approx(bw_states[1]).epsilon(1e-12));
}

TEST_CASE("encode_sequence: appending tokens preserves forward prefix states only") {
    BoundEncoder enc = make_encoder(2, 2, 21);
    Tape tape;
    auto bound = bind_parameters(tape, enc.store);
    std::vector<Var> prefix = {tape.constant(Tensor::row({1.0, 0.0})),
                               tape.constant(Tensor::row({0.5, -0.5}))};
    auto short_out = encoders::encode_sequence(tape, prefix, enc.params, bound);
    std::vector<Var> longer = prefix;
    longer.push_back(tape.constant(Tensor::row({-1.0, 2.0})));
    auto long_out = encoders::encode_sequence(tape, longer, enc.params, bound);

    bool backward_changed = false;
    for (size_t t = 0; t < prefix.size(); ++t) {
        auto a = tape.value(short_out.token_states[t]);
        auto b = tape.value(long_out.token_states[t]);
        for (int64_t j = 0; j < 2; ++j) CHECK(a[static_cast<size_t>(j)] == b[static_cast<size_t>(j)]);
        for (int64_t j = 2; j < 4; ++j)
            if (a[static_cast<size_t>(j)] != b[static_cast<size_t>(j)]) backward_changed = true;
    }
    CHECK(backward_changed);
}

TEST_CASE("shared encoder parameters: swapping parameter sets changes the encoding") {
    BoundEncoder enc_a = make_encoder(3, 2, 31);
    BoundEncoder enc_b = make_encoder(3, 2, 32);
    Tape tape;
    auto bound_a = bind_parameters(tape, enc_a.store);
    auto bound_b = bind_parameters(tape, enc_b.store);
    std::vector<Var> tokens = {tape.constant(Tensor::row({1.0, -0.5, 0.25})),
                               tape.constant(Tensor::row({0.0, 0.75, -1.0}))};
    auto out_a = encoders::encode_sequence(tape, tokens, enc_a.params, bound_a);
    auto out_b = encoders::encode_sequence(tape, tokens, enc_b.params, bound_b);
    bool differs = false;
    for (size_t i = 0; i < 4; ++i)
        if (tape.value(out_a.global)[i] != tape.value(out_b.global)[i]) differs = true;
    CHECK(differs);
}

TEST_CASE("shared encoder parameters: gradients flow from both query and document paths") {
    BoundEncoder enc = make_encoder(2, 2, 41);
    std::vector<Tensor> init = enc.store.tensors();
    auto build = [&](Tape& t, const std::vector<Var>& leaves) {
        std::vector<Var> query = {t.constant(Tensor::row({1.0, -1.0})),
                                  t.constant(Tensor::row({0.5, 0.5}))};
        std::vector<Var> doc = {t.constant(Tensor::row({-0.25, 0.75}))};
        auto q = encoders::encode_sequence(t, query, enc.params, leaves);
        auto d = encoders::encode_sequence(t, doc, enc.params, leaves);
        return t.dot(q.global, d.global);
    };
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
        for (const Tensor& p : params) l2.push_back(t2.leaf(p));
        return t2.value_scalar(build(t2, l2));
    };
    CHECK(oracles::max_gradient_error(init, eval, analytic) < 1e-4);

    // the query-only path alone yields different encoder gradients
    auto build_query_only = [&](Tape& t, const std::vector<Var>& leaves) {
        std::vector<Var> query = {t.constant(Tensor::row({1.0, -1.0})),
                                  t.constant(Tensor::row({0.5, 0.5}))};
        auto q = encoders::encode_sequence(t, query, enc.params, leaves);
        return t.dot(q.global, q.global);
    };
    Tape tape2;
    std::vector<Var> leaves2;
    for (const Tensor& t : init) leaves2.push_back(tape2.leaf(t));
    tape2.backward(build_query_only(tape2, leaves2));
    bool differs = false;
    for (size_t i = 0; i < leaves2.size(); ++i) {
        auto a = tape.grad(leaves[i]);
        auto b = tape2.grad(leaves2[i]);
        for (size_t j = 0; j < a.size(); ++j)
            if (a[j] != b[j]) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("relation tokens and mean word vectors") {
    CHECK(encoders::relation_name_tokens("people.person.place_of_birth") ==
          std::vector<std::string>{"people", "person", "place", "of", "birth"});
    CHECK(encoders::relation_name_tokens("rel3") == std::vector<std::string>{"rel3"});

    EmbeddingTable words;
    words.dim = 2;
    words.oov = Tensor::row({7.0, 7.0});
    words.add("place", Tensor::row({1.0, 2.0}));
    words.add("birth", Tensor::row({3.0, 4.0}));
    Tensor single = encoders::mean_word_vector(words, {"place"});
    CHECK(single[0] == doctest::Approx(1.0));
    CHECK(single[1] == doctest::Approx(2.0));
    Tensor mean = encoders::mean_word_vector(words, {"place", "birth"});
    CHECK(mean[0] == doctest::Approx(2.0));
    CHECK(mean[1] == doctest::Approx(3.0));
    Tensor with_oov = encoders::mean_word_vector(words, {"place", "unknown"});
    CHECK(with_oov[0] == doctest::Approx(4.0));
    Tensor empty = encoders::mean_word_vector(words, {});
    CHECK(empty[0] == 0.0);
}

TEST_CASE("init_relation: hand-set weights match the longhand product") {
    Tape tape;
    // d_kb = 2, d_w = 2, d_r = 2
    Var transe = tape.constant(Tensor::row({1.0, -2.0}));
    Var words = tape.constant(Tensor::row({0.5, 0.25}));
    Tensor w({4, 2}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, 0.8});
    Var w_var = tape.leaf(w);
    Var out = encoders::init_relation(tape, transe, words, w_var);
    // concat = [1, -2, 0.5, 0.25]
    double pre0 = 1.0 * 0.1 + (-2.0) * 0.3 + 0.5 * (-0.5) + 0.25 * 0.7;
    double pre1 = 1.0 * -0.2 + (-2.0) * 0.4 + 0.5 * 0.6 + 0.25 * 0.8;
    CHECK(tape.value(out)[0] == doctest::Approx(std::max(0.0, pre0)).epsilon(1e-12));
    CHECK(tape.value(out)[1] == doctest::Approx(std::max(0.0, pre1)).epsilon(1e-12));

    // zero inputs give the zero vector through the rectifier
    Var zt = tape.constant(Tensor::zeros({1, 2}));
    Var zw = tape.constant(Tensor::zeros({1, 2}));
    Var zout = encoders::init_relation(tape, zt, zw, w_var);
    CHECK(tape.value(zout)[0] == 0.0);
    CHECK(tape.value(zout)[1] == 0.0);

    // entrywise non-negative for arbitrary inputs
    RngStream rng(5);
    for (int k = 0; k < 20; ++k) {
        Tensor a({1, 2}, {rng.uniform(-3, 3), rng.uniform(-3, 3)});
        Tensor b({1, 2}, {rng.uniform(-3, 3), rng.uniform(-3, 3)});
        Var r = encoders::init_relation(tape, tape.constant(a), tape.constant(b), w_var);
        CHECK(tape.value(r)[0] >= 0.0);
        CHECK(tape.value(r)[1] >= 0.0);
    }
}
