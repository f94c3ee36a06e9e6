#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relgraph/kg.hpp"

namespace relgraph::retrieval {

struct PprConfig {
    double damping = 0.8;
    double tol = 1e-8;
    int64_t max_iter = 1000;
};

struct PprResult {
    std::vector<double> scores;  // per entity, non-negative, sums to 1
    int64_t iterations = 0;
    double residual = 0.0;
};

// Personalized PageRank by power iteration over the knowledge graph
// with edges treated as undirected. The restart vector is uniform over
// the seeds; rows are degree-normalized and dangling nodes teleport to
// the restart. Stops when the L1 residual drops below tol.
PprResult ppr(const kg::KnowledgeGraph& graph, const std::vector<int64_t>& seeds,
              const PprConfig& config = {});

// Question subgraph: seeds plus the top-scoring non-seed entities up
// to the node budget (nonzero scores only, ties by ascending entity
// id), the induced edges, document-relation candidates for every
// co-mentioned entity pair inside the node set, and binary labels.
kg::QuestionSubgraph extract_subgraph(const kg::KnowledgeGraph& graph,
                                      const kg::QuestionInstance& question,
                                      const std::vector<kg::Mention>& mentions, int64_t node_budget,
                                      const PprConfig& config = {});

// Fraction of answerable questions whose answer set intersects their
// subgraph's node set.
double answer_recall(const std::vector<kg::QuestionSubgraph>& subgraphs,
                     const std::vector<kg::QuestionInstance>& questions);

// One record per question:
// qid<TAB>nodes<TAB>edges<TAB>doc_edges<TAB>labels
// nodes: space-separated entity names; edges: semicolon-separated
// s,r,o name triples; doc_edges: semicolon-separated a,b,doc_id;
// labels: space-separated 0/1 aligned with nodes.
void save_subgraphs(const std::vector<kg::QuestionSubgraph>& subgraphs,
                    const kg::KnowledgeGraph& graph, const std::vector<kg::Document>& docs,
                    const std::string& path);
std::vector<kg::QuestionSubgraph> load_subgraphs(const std::string& path,
                                                 const kg::KnowledgeGraph& graph,
                                                 const std::vector<kg::Document>& docs);

}  // namespace relgraph::retrieval
