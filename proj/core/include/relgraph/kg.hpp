#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "relgraph/rng.hpp"

namespace relgraph::kg {

struct Triple {
    int64_t subject;
    int64_t relation;
    int64_t object;
    bool operator==(const Triple&) const = default;
};

// Directed multigraph of entities connected by typed relations.
// Tables are insertion-ordered so ids are stable across runs.
class KnowledgeGraph {
public:
    int64_t intern_entity(const std::string& name);
    int64_t intern_relation(const std::string& name);
    // -1 when unknown
    int64_t entity_id(const std::string& name) const;
    int64_t relation_id(const std::string& name) const;
    const std::string& entity_name(int64_t id) const { return entity_names_.at(static_cast<size_t>(id)); }
    const std::string& relation_name(int64_t id) const { return relation_names_.at(static_cast<size_t>(id)); }
    int64_t num_entities() const { return static_cast<int64_t>(entity_names_.size()); }
    int64_t num_relations() const { return static_cast<int64_t>(relation_names_.size()); }

    // false and unchanged if the triple is already present
    bool add_triple(int64_t s, int64_t r, int64_t o);
    const std::vector<Triple>& triples() const { return triples_; }

private:
    std::vector<std::string> entity_names_;
    std::vector<std::string> relation_names_;
    std::unordered_map<std::string, int64_t> entity_ids_;
    std::unordered_map<std::string, int64_t> relation_ids_;
    std::vector<Triple> triples_;
    std::unordered_map<std::string, int64_t> triple_index_;
};

struct Document {
    std::string id;
    std::vector<std::string> tokens;  // at most the configured maximum
    bool truncated = false;
};

struct Mention {
    int64_t entity;
    int64_t document;  // index into the document list
    std::vector<int64_t> positions;  // strictly increasing token positions
};

struct QuestionInstance {
    std::string id;
    std::vector<std::string> tokens;
    std::vector<int64_t> seed_entities;
    std::vector<int64_t> answers;  // may be empty
};

// Candidate document relation: two co-mentioned entities plus the
// document connecting them. Entities are stored with vi < vj.
struct DocEdgeCandidate {
    int64_t entity_a;
    int64_t entity_b;
    int64_t document;
};

struct QuestionSubgraph {
    std::string question_id;
    std::vector<int64_t> nodes;          // entity ids, ascending
    std::vector<Triple> edges;           // induced, load order
    std::vector<DocEdgeCandidate> doc_edges;
    std::vector<double> labels;          // aligned with nodes, 0/1
};

struct KgLoadResult {
    KnowledgeGraph graph;
    int64_t duplicates_dropped = 0;
};

// Tab-separated `subject relation object` lines.
KgLoadResult load_kg(const std::string& path);
void save_kg(const KnowledgeGraph& kg, const std::string& path);

// `doc_id<TAB>space-separated tokens`; tokens beyond max_tokens are cut.
std::vector<Document> load_documents(const std::string& path, int64_t max_tokens);
void save_documents(const std::vector<Document>& docs, const std::string& path);

// `qid<TAB>question tokens<TAB>comma-separated seeds<TAB>comma-separated answers`
std::vector<QuestionInstance> load_questions(const std::string& path, const KnowledgeGraph& kg);
void save_questions(const std::vector<QuestionInstance>& questions, const KnowledgeGraph& kg,
                    const std::string& path);

// `doc_id<TAB>entity<TAB>comma-separated positions`
std::vector<Mention> load_mentions(const std::string& path, const KnowledgeGraph& kg,
                                   const std::vector<Document>& docs);
void save_mentions(const std::vector<Mention>& mentions, const KnowledgeGraph& kg,
                   const std::vector<Document>& docs, const std::string& path);

// Exact lowercase token-span matching of entity names against the
// documents; each found mention is then independently dropped with
// probability noise_rate.
std::vector<Mention> link_documents(const KnowledgeGraph& kg, const std::vector<Document>& docs,
                                    double noise_rate, RngStream& rng);

// 1 exactly for nodes present in the answer set.
std::vector<double> make_labels(const std::vector<int64_t>& nodes,
                                const std::vector<int64_t>& answers);

std::vector<std::string> split_tokens(const std::string& line);

}  // namespace relgraph::kg
