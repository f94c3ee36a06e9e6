#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relgraph/kg.hpp"

namespace relgraph::kg {

struct SyntheticConfig {
    int64_t entities = 50;
    int64_t relations = 4;
    int64_t triples = 200;      // edges written to the knowledge graph
    int64_t documents = 150;
    int64_t train_questions = 120;
    int64_t val_questions = 20;
    int64_t test_questions = 40;
    // fraction of questions whose answering facts exist only in documents
    double doc_only_fraction = 0.3;
    // fraction of questions with an empty answer set
    double unanswerable_fraction = 0.0;
    uint64_t seed = 42;
};

struct SyntheticStats {
    int64_t doc_only_questions = 0;
    int64_t kg_questions = 0;
    int64_t unanswerable_questions = 0;
    int64_t doc_only_facts = 0;
    int64_t verbalized_facts = 0;
};

struct SyntheticData {
    KnowledgeGraph graph;  // doc-only facts are not among its triples
    std::vector<Document> documents;
    std::vector<QuestionInstance> train;
    std::vector<QuestionInstance> validation;
    std::vector<QuestionInstance> test;
    SyntheticStats stats;
};

// Deterministic benchmark generator. Questions ask for the objects of
// (seed, relation, ?) or the subjects of (?, relation, seed); each
// question's answers are derivable from the graph or from a document
// that verbalizes the answering fact, and a configured fraction is
// answerable only through documents.
SyntheticData gen_synthetic(const SyntheticConfig& config);

// kg.tsv, docs.tsv, questions_{train,val,test}.tsv under dir
void write_dataset(const SyntheticData& data, const std::string& dir);

}  // namespace relgraph::kg
