#include "relgraph/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>

#include "relgraph/errors.hpp"

namespace relgraph::kg {

namespace {

struct Fact {
    int64_t s, r, o;
    bool doc_only;
};

struct PendingQuestion {
    bool forward;          // seed is subject, answers are objects
    int64_t seed;
    int64_t relation;
    std::vector<int64_t> answers;
    std::vector<int64_t> answer_facts;  // indices into the fact list
    bool doc_only;
    bool unanswerable;
};

std::string entity_name(int64_t i) { return "e" + std::to_string(i); }
std::string relation_name(int64_t i) { return "rel" + std::to_string(i); }

std::vector<std::string> verbalize(const Fact& f, int64_t variant) {
    std::string s = entity_name(f.s), r = relation_name(f.r), o = entity_name(f.o);
    switch (variant % 3) {
        case 0: return {s, r, o};
        case 1: return {s, "has", r, "with", o};
        default: return {"the", r, "of", s, "is", o};
    }
}

}  // namespace

SyntheticData gen_synthetic(const SyntheticConfig& cfg) {
    if (cfg.entities < 5) throw DataError("gen_synthetic: need at least 5 entities");
    if (cfg.relations < 2) throw DataError("gen_synthetic: need at least 2 relations");
    if (cfg.triples < 1 || cfg.documents < 1) throw DataError("gen_synthetic: empty graph or corpus");
    int64_t total_q = cfg.train_questions + cfg.val_questions + cfg.test_questions;
    if (total_q < 1) throw DataError("gen_synthetic: no questions requested");

    int64_t n_doc_only = static_cast<int64_t>(std::llround(cfg.doc_only_fraction * static_cast<double>(total_q)));
    int64_t n_unans = static_cast<int64_t>(std::llround(cfg.unanswerable_fraction * static_cast<double>(total_q)));
    int64_t n_kgq = total_q - n_doc_only - n_unans;
    if (n_kgq < 0) throw DataError("gen_synthetic: doc-only and unanswerable fractions exceed 1");

    RngStream rng(cfg.seed);
    SyntheticData data;
    for (int64_t e = 0; e < cfg.entities; ++e) data.graph.intern_entity(entity_name(e));
    for (int64_t r = 0; r < cfg.relations; ++r) data.graph.intern_relation(relation_name(r));

    std::vector<Fact> facts;
    std::set<std::pair<int64_t, int64_t>> kg_sr_pairs;

    // KG edges, covering every entity as a subject first so that each
    // entity appears in the triples file
    auto sample_kg_fact = [&](int64_t forced_subject) -> bool {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            int64_t s = forced_subject >= 0 ? forced_subject : rng.uniform_int(cfg.entities);
            int64_t r = rng.uniform_int(cfg.relations);
            int64_t o = rng.uniform_int(cfg.entities);
            if (o == s) continue;
            if (!data.graph.add_triple(s, r, o)) continue;
            facts.push_back({s, r, o, false});
            kg_sr_pairs.insert({s, r});
            return true;
        }
        return false;
    };
    int64_t budget = cfg.triples;
    for (int64_t e = 0; e < cfg.entities && budget > 0; ++e, --budget) {
        if (!sample_kg_fact(e)) throw DataError("gen_synthetic: graph too dense to sample triples");
    }
    while (budget > 0) {
        if (!sample_kg_fact(-1)) throw DataError("gen_synthetic: graph too dense to sample triples");
        --budget;
    }

    // doc-only facts: one per reserved (subject, relation) pair that no
    // KG edge uses, so their questions cannot be answered from edges
    for (int64_t k = 0; k < n_doc_only; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
            int64_t s = rng.uniform_int(cfg.entities);
            int64_t r = rng.uniform_int(cfg.relations);
            if (kg_sr_pairs.contains({s, r})) continue;
            bool reserved = false;
            for (const Fact& f : facts)
                if (f.doc_only && f.s == s && f.r == r) reserved = true;
            if (reserved) continue;
            int64_t o = rng.uniform_int(cfg.entities);
            if (o == s) continue;
            facts.push_back({s, r, o, true});
            placed = true;
        }
        if (!placed) throw DataError("gen_synthetic: no valid question targets (doc-only pairs exhausted)");
    }

    // group facts by (subject, relation) and (object, relation)
    std::map<std::pair<int64_t, int64_t>, std::vector<int64_t>> forward_groups, inverse_groups;
    for (size_t i = 0; i < facts.size(); ++i) {
        forward_groups[{facts[i].s, facts[i].r}].push_back(static_cast<int64_t>(i));
        inverse_groups[{facts[i].o, facts[i].r}].push_back(static_cast<int64_t>(i));
    }

    std::vector<PendingQuestion> pending;

    // doc-only questions, always forward over the reserved pairs
    for (size_t i = 0; i < facts.size(); ++i) {
        if (!facts[i].doc_only) continue;
        PendingQuestion q;
        q.forward = true;
        q.seed = facts[i].s;
        q.relation = facts[i].r;
        q.answers = {facts[i].o};
        q.answer_facts = {static_cast<int64_t>(i)};
        q.doc_only = true;
        q.unanswerable = false;
        pending.push_back(std::move(q));
    }

    // graph-answerable questions from groups containing at least one KG fact
    std::vector<PendingQuestion> kg_pool;
    auto harvest = [&](const auto& groups, bool forward) {
        for (const auto& [key, fact_ids] : groups) {
            bool has_kg = false;
            for (int64_t fi : fact_ids)
                if (!facts[static_cast<size_t>(fi)].doc_only) has_kg = true;
            if (!has_kg) continue;
            PendingQuestion q;
            q.forward = forward;
            q.seed = key.first;
            q.relation = key.second;
            for (int64_t fi : fact_ids) {
                const Fact& f = facts[static_cast<size_t>(fi)];
                q.answers.push_back(forward ? f.o : f.s);
                q.answer_facts.push_back(fi);
            }
            std::sort(q.answers.begin(), q.answers.end());
            q.answers.erase(std::unique(q.answers.begin(), q.answers.end()), q.answers.end());
            q.doc_only = false;
            q.unanswerable = false;
            kg_pool.push_back(std::move(q));
        }
    };
    harvest(forward_groups, true);
    harvest(inverse_groups, false);
    if (static_cast<int64_t>(kg_pool.size()) < n_kgq)
        throw DataError("gen_synthetic: no valid question targets (need more distinct groups)");
    rng.shuffle(kg_pool);
    pending.insert(pending.end(), kg_pool.begin(), kg_pool.begin() + n_kgq);

    // unanswerable questions over pairs with no fact in either direction
    for (int64_t k = 0; k < n_unans; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
            int64_t s = rng.uniform_int(cfg.entities);
            int64_t r = rng.uniform_int(cfg.relations);
            if (forward_groups.contains({s, r})) continue;
            bool dup = false;
            for (const PendingQuestion& q : pending)
                if (q.unanswerable && q.seed == s && q.relation == r) dup = true;
            if (dup) continue;
            PendingQuestion q;
            q.forward = true;
            q.seed = s;
            q.relation = r;
            q.doc_only = false;
            q.unanswerable = true;
            pending.push_back(std::move(q));
            placed = true;
        }
        if (!placed) throw DataError("gen_synthetic: no valid question targets (unanswerable pairs exhausted)");
    }

    // documents: every doc-only fact and at least one answering fact per
    // question must appear; remaining capacity verbalizes other facts,
    // two facts per document when the required list overflows
    std::vector<int64_t> must;
    std::set<int64_t> in_must;
    for (size_t i = 0; i < facts.size(); ++i) {
        if (facts[i].doc_only) {
            must.push_back(static_cast<int64_t>(i));
            in_must.insert(static_cast<int64_t>(i));
        }
    }
    for (const PendingQuestion& q : pending) {
        if (q.unanswerable || q.answer_facts.empty()) continue;
        bool covered = false;
        for (int64_t fi : q.answer_facts)
            if (in_must.contains(fi)) covered = true;
        if (covered) continue;
        int64_t pick = q.answer_facts[static_cast<size_t>(rng.uniform_int(
            static_cast<int64_t>(q.answer_facts.size())))];
        must.push_back(pick);
        in_must.insert(pick);
    }
    // second pass: cover remaining answering facts while capacity lasts
    int64_t capacity = 2 * cfg.documents;
    for (const PendingQuestion& q : pending) {
        for (int64_t fi : q.answer_facts) {
            if (static_cast<int64_t>(must.size()) >= capacity) break;
            if (!in_must.contains(fi)) {
                must.push_back(fi);
                in_must.insert(fi);
            }
        }
    }
    // filler facts so every document verbalizes something
    for (size_t i = 0; i < facts.size() && static_cast<int64_t>(must.size()) < cfg.documents; ++i) {
        if (!in_must.contains(static_cast<int64_t>(i))) {
            must.push_back(static_cast<int64_t>(i));
            in_must.insert(static_cast<int64_t>(i));
        }
    }
    if (static_cast<int64_t>(must.size()) > capacity)
        throw DataError("gen_synthetic: documents cannot cover required facts");
    rng.shuffle(must);

    int64_t n_docs = std::min<int64_t>(cfg.documents, static_cast<int64_t>(must.size()));
    std::vector<std::vector<int64_t>> doc_facts(static_cast<size_t>(n_docs));
    for (size_t k = 0; k < must.size(); ++k) {
        doc_facts[k % static_cast<size_t>(n_docs)].push_back(must[k]);
    }
    for (size_t d = 0; d < doc_facts.size(); ++d) {
        Document doc;
        doc.id = "d" + std::to_string(d);
        for (size_t j = 0; j < doc_facts[d].size(); ++j) {
            if (j) doc.tokens.push_back(".");
            auto part = verbalize(facts[static_cast<size_t>(doc_facts[d][j])], rng.uniform_int(3));
            doc.tokens.insert(doc.tokens.end(), part.begin(), part.end());
        }
        data.documents.push_back(std::move(doc));
        data.stats.verbalized_facts += static_cast<int64_t>(doc_facts[d].size());
    }

    // question text, global shuffle, split
    rng.shuffle(pending);
    std::vector<QuestionInstance> all;
    for (size_t i = 0; i < pending.size(); ++i) {
        const PendingQuestion& p = pending[i];
        QuestionInstance q;
        std::string num = std::to_string(i);
        q.id = "q" + std::string(num.size() < 4 ? 4 - num.size() : 0, '0') + num;
        q.tokens = {"which", "entity", "has", "relation", relation_name(p.relation),
                    p.forward ? "from" : "into", entity_name(p.seed)};
        q.seed_entities = {p.seed};
        q.answers = p.answers;
        std::sort(q.answers.begin(), q.answers.end());
        all.push_back(std::move(q));
        if (p.doc_only) ++data.stats.doc_only_questions;
        else if (p.unanswerable) ++data.stats.unanswerable_questions;
        else ++data.stats.kg_questions;
    }
    for (size_t i = 0; i < all.size(); ++i) {
        if (static_cast<int64_t>(i) < cfg.train_questions) data.train.push_back(all[i]);
        else if (static_cast<int64_t>(i) < cfg.train_questions + cfg.val_questions)
            data.validation.push_back(all[i]);
        else data.test.push_back(all[i]);
    }

    for (const Fact& f : facts)
        if (f.doc_only) ++data.stats.doc_only_facts;
    return data;
}

void write_dataset(const SyntheticData& data, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_kg(data.graph, dir + "/kg.tsv");
    save_documents(data.documents, dir + "/docs.tsv");
    save_questions(data.train, data.graph, dir + "/questions_train.tsv");
    save_questions(data.validation, data.graph, dir + "/questions_val.tsv");
    save_questions(data.test, data.graph, dir + "/questions_test.tsv");
}

}  // namespace relgraph::kg
