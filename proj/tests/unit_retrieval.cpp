#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/retrieval.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/synthetic.hpp"

using namespace relgraph;

namespace {

kg::KnowledgeGraph path_graph(int64_t n) {
    kg::KnowledgeGraph graph;
    int64_t r = 0;
    for (int64_t i = 0; i < n; ++i) graph.intern_entity("e" + std::to_string(i));
    r = graph.intern_relation("r");
    for (int64_t i = 0; i + 1 < n; ++i) graph.add_triple(i, r, i + 1);
    return graph;
}

kg::KnowledgeGraph random_graph(int64_t n, int64_t edges, uint64_t seed) {
    kg::KnowledgeGraph graph;
    for (int64_t i = 0; i < n; ++i) graph.intern_entity("e" + std::to_string(i));
    int64_t r0 = graph.intern_relation("r0");
    int64_t r1 = graph.intern_relation("r1");
    RngStream rng(seed);
    int64_t added = 0;
    while (added < edges) {
        int64_t a = rng.uniform_int(n), b = rng.uniform_int(n);
        if (a == b) continue;
        if (graph.add_triple(a, rng.bernoulli(0.5) ? r0 : r1, b)) ++added;
    }
    return graph;
}

}  // namespace

TEST_CASE("ppr: single node with a self-loop keeps all mass") {
    kg::KnowledgeGraph graph;
    graph.intern_entity("a");
    graph.add_triple(0, graph.intern_relation("self"), 0);
    auto result = retrieval::ppr(graph, {0});
    REQUIRE(result.scores.size() == 1);
    CHECK(result.scores[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ppr: three-node path matches the dense power-iteration oracle") {
    kg::KnowledgeGraph graph = path_graph(3);
    retrieval::PprConfig cfg;
    cfg.damping = 0.8;
    cfg.tol = 1e-12;
    auto result = retrieval::ppr(graph, {0}, cfg);
    auto oracle = oracles::dense_ppr(3, {{0, 1}, {1, 2}}, {0}, 0.8, 4000);
    for (int64_t i = 0; i < 3; ++i)
        CHECK(std::abs(result.scores[static_cast<size_t>(i)] - oracle[static_cast<size_t>(i)]) < 1e-8);
}

TEST_CASE("ppr: vanishing damping returns the restart vector") {
    kg::KnowledgeGraph graph = path_graph(4);
    retrieval::PprConfig cfg;
    cfg.damping = 1e-9;
    auto result = retrieval::ppr(graph, {0, 2}, cfg);
    CHECK(std::abs(result.scores[0] - 0.5) < 1e-8);
    CHECK(std::abs(result.scores[2] - 0.5) < 1e-8);
    CHECK(result.scores[1] < 1e-8);
}

TEST_CASE("ppr: empty seeds and iteration exhaustion are errors") {
    kg::KnowledgeGraph graph = path_graph(3);
    CHECK_THROWS_AS(retrieval::ppr(graph, {}), DataError);
    retrieval::PprConfig cfg;
    cfg.tol = 1e-300;
    cfg.max_iter = 3;
    CHECK_THROWS_WITH_AS(retrieval::ppr(graph, {0}, cfg), doctest::Contains("residual"), NumericError);
}

TEST_CASE("ppr: scores sum to one at every stopping point") {
    kg::KnowledgeGraph graph = random_graph(25, 60, 5);
    for (double tol : {0.5, 0.1, 0.01, 1e-4, 1e-6, 1e-8}) {
        retrieval::PprConfig cfg;
        cfg.tol = tol;
        auto result = retrieval::ppr(graph, {3, 7}, cfg);
        double sum = 0.0;
        for (double s : result.scores) {
            CHECK(s >= 0.0);
            sum += s;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("extract_subgraph: full budget takes every reachable entity plus seeds") {
    kg::KnowledgeGraph graph = path_graph(5);
    // e4 disconnected from the seed side: break the chain
    kg::KnowledgeGraph split;
    for (int64_t i = 0; i < 5; ++i) split.intern_entity("e" + std::to_string(i));
    int64_t r = split.intern_relation("r");
    split.add_triple(0, r, 1);
    split.add_triple(1, r, 2);
    split.add_triple(3, r, 4);

    kg::QuestionInstance q;
    q.id = "q0";
    q.tokens = {"who"};
    q.seed_entities = {0};
    q.answers = {2};
    auto sg = retrieval::extract_subgraph(split, q, {}, 50);
    CHECK(sg.nodes == std::vector<int64_t>{0, 1, 2});  // zero-score nodes excluded
    CHECK(sg.labels == std::vector<double>{0.0, 0.0, 1.0});
    CHECK(sg.edges.size() == 2);

    auto tight = retrieval::extract_subgraph(split, q, {}, 1);
    CHECK(tight.nodes == std::vector<int64_t>{0});  // seeds always survive the cutoff
    CHECK_THROWS_AS(retrieval::extract_subgraph(split, q, {}, 0), DataError);
}

TEST_CASE("extract_subgraph: matches a full-sort oracle and nests with the budget") {
    kg::KnowledgeGraph graph = random_graph(30, 80, 9);
    kg::QuestionInstance q;
    q.id = "q0";
    q.tokens = {"who"};
    q.seed_entities = {4, 11};

    auto scores = retrieval::ppr(graph, q.seed_entities).scores;
    std::vector<int64_t> candidates;
    for (int64_t e = 0; e < graph.num_entities(); ++e) {
        if (e == 4 || e == 11) continue;
        if (scores[static_cast<size_t>(e)] > 0.0) candidates.push_back(e);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [&](int64_t a, int64_t b) {
        if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
            return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
        return a < b;
    });

    std::vector<int64_t> previous;
    for (int64_t budget = 2; budget <= 12; ++budget) {
        auto sg = retrieval::extract_subgraph(graph, q, {}, budget);
        std::vector<int64_t> expected = {4, 11};
        for (int64_t i = 0; i < budget - 2 && i < static_cast<int64_t>(candidates.size()); ++i)
            expected.push_back(candidates[static_cast<size_t>(i)]);
        std::sort(expected.begin(), expected.end());
        CHECK(sg.nodes == expected);
        // monotone nesting
        std::set<int64_t> now(sg.nodes.begin(), sg.nodes.end());
        for (int64_t e : previous) CHECK(now.contains(e));
        previous = sg.nodes;
        // induced edges only
        for (const auto& t : sg.edges) {
            CHECK(now.contains(t.subject));
            CHECK(now.contains(t.object));
        }
    }
}

TEST_CASE("extract_subgraph: attaches co-mentioned document pairs inside the node set") {
    kg::KnowledgeGraph graph = path_graph(4);
    std::vector<kg::Document> docs = {{"d0", {"e0", "r", "e1"}, false},
                                      {"d1", {"e3", "and", "e0"}, false}};
    RngStream rng(1);
    auto mentions = kg::link_documents(graph, docs, 0.0, rng);
    kg::QuestionInstance q;
    q.id = "q0";
    q.tokens = {"who"};
    q.seed_entities = {0};
    auto sg = retrieval::extract_subgraph(graph, q, mentions, 50);
    REQUIRE(sg.doc_edges.size() == 2);
    CHECK(sg.doc_edges[0].entity_a == 0);
    CHECK(sg.doc_edges[0].entity_b == 1);
    CHECK(sg.doc_edges[0].document == 0);
    CHECK(sg.doc_edges[1].entity_a == 0);
    CHECK(sg.doc_edges[1].entity_b == 3);
    CHECK(sg.doc_edges[1].document == 1);

    // restrict the budget so e3 drops out: its pair must vanish too
    auto small = retrieval::extract_subgraph(graph, q, mentions, 2);
    for (const auto& de : small.doc_edges) {
        CHECK(de.entity_a != 3);
        CHECK(de.entity_b != 3);
    }
}

TEST_CASE("extract_subgraph: deterministic") {
    kg::KnowledgeGraph graph = random_graph(20, 50, 3);
    kg::QuestionInstance q;
    q.id = "q0";
    q.tokens = {"who"};
    q.seed_entities = {1};
    auto a = retrieval::extract_subgraph(graph, q, {}, 10);
    auto b = retrieval::extract_subgraph(graph, q, {}, 10);
    CHECK(a.nodes == b.nodes);
    CHECK(a.labels == b.labels);
    REQUIRE(a.edges.size() == b.edges.size());
    for (size_t i = 0; i < a.edges.size(); ++i) CHECK(a.edges[i] == b.edges[i]);
}

TEST_CASE("answer_recall: seed answers and disjoint answers") {
    kg::KnowledgeGraph graph = path_graph(4);
    kg::QuestionInstance q1;
    q1.id = "q1";
    q1.seed_entities = {0};
    q1.answers = {0};
    kg::QuestionInstance q2;
    q2.id = "q2";
    q2.seed_entities = {0};
    q2.answers = {3};

    auto sg1 = retrieval::extract_subgraph(graph, q1, {}, 1);
    auto sg2 = retrieval::extract_subgraph(graph, q2, {}, 1);
    CHECK(retrieval::answer_recall({sg1}, {q1}) == doctest::Approx(1.0));
    CHECK(retrieval::answer_recall({sg2}, {q2}) == doctest::Approx(0.0));
    CHECK(retrieval::answer_recall({sg1, sg2}, {q1, q2}) == doctest::Approx(0.5));
}

TEST_CASE("answer_recall: high on the default synthetic benchmark") {
    kg::SyntheticConfig cfg;
    cfg.seed = 21;
    kg::SyntheticData data = kg::gen_synthetic(cfg);
    RngStream rng(1);
    auto mentions = kg::link_documents(data.graph, data.documents, 0.0, rng);
    std::vector<kg::QuestionSubgraph> subgraphs;
    std::vector<kg::QuestionInstance> questions;
    for (const auto* split : {&data.train, &data.validation, &data.test}) {
        for (const auto& q : *split) {
            subgraphs.push_back(retrieval::extract_subgraph(data.graph, q, mentions, 50));
            questions.push_back(q);
        }
    }
    CHECK(retrieval::answer_recall(subgraphs, questions) >= 0.95);
}

TEST_CASE("subgraph file round trip") {
    kg::SyntheticConfig cfg;
    cfg.entities = 15;
    cfg.relations = 2;
    cfg.triples = 40;
    cfg.documents = 25;
    cfg.train_questions = 10;
    cfg.val_questions = 3;
    cfg.test_questions = 5;
    cfg.seed = 4;
    kg::SyntheticData data = kg::gen_synthetic(cfg);
    RngStream rng(1);
    auto mentions = kg::link_documents(data.graph, data.documents, 0.0, rng);
    std::vector<kg::QuestionSubgraph> subgraphs;
    for (const auto& q : data.train)
        subgraphs.push_back(retrieval::extract_subgraph(data.graph, q, mentions, 12));

    auto dir = std::filesystem::temp_directory_path() / "relgraph_tests" / "sg_roundtrip";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "subgraphs.tsv").string();
    retrieval::save_subgraphs(subgraphs, data.graph, data.documents, path);
    auto loaded = retrieval::load_subgraphs(path, data.graph, data.documents);
    REQUIRE(loaded.size() == subgraphs.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].question_id == subgraphs[i].question_id);
        CHECK(loaded[i].nodes == subgraphs[i].nodes);
        CHECK(loaded[i].labels == subgraphs[i].labels);
        REQUIRE(loaded[i].edges.size() == subgraphs[i].edges.size());
        for (size_t j = 0; j < loaded[i].edges.size(); ++j)
            CHECK(loaded[i].edges[j] == subgraphs[i].edges[j]);
        REQUIRE(loaded[i].doc_edges.size() == subgraphs[i].doc_edges.size());
        for (size_t j = 0; j < loaded[i].doc_edges.size(); ++j) {
            CHECK(loaded[i].doc_edges[j].entity_a == subgraphs[i].doc_edges[j].entity_a);
            CHECK(loaded[i].doc_edges[j].entity_b == subgraphs[i].doc_edges[j].entity_b);
            CHECK(loaded[i].doc_edges[j].document == subgraphs[i].doc_edges[j].document);
        }
    }
}
