#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "relgraph/encoders.hpp"
#include "relgraph/kg.hpp"
#include "relgraph/params.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tape.hpp"

namespace relgraph::model {

struct ModelConfig {
    int64_t layers = 3;
    int64_t d_kb = 16;
    int64_t d_w = 16;
    int64_t d_r = 16;
    int64_t d_v = 16;
    int64_t clusters = 8;
    int64_t max_doc_tokens = 32;
    double dropout = 0.2;
    // ablation mask; false removes the component
    bool use_doc_relations = true;
    bool use_bidir_attention = true;
    bool use_coarsening = true;

    void validate() const;
    int64_t node_in_dim(int64_t layer) const { return layer == 0 ? d_kb : d_v; }
    // width of the vector feeding the readout weight
    int64_t readout_dim() const {
        if (!use_coarsening) return d_v;
        return d_kb + layers * d_v;  // coarse blocks for layers 0..L-1 plus final states
    }
};

struct LayerParamIdx {
    size_t w_doc_rel;   // [3*d_w, d_r]
    size_t w_rel;       // [d_r, d_v]
    size_t w_node;      // [in_dim, d_v]
    size_t w_edge_in;   // [d_v, d_v]
    size_t w_edge_out;  // [d_v, d_v]
    size_t w_doc;       // [d_v, d_w]
    size_t w_cluster;   // [in_dim, clusters]
    size_t bn_scale;    // [1, d_v]
    size_t bn_shift;    // [1, d_v]
};

struct ModelParamIdx {
    size_t entity_table;    // [num_entities, d_kb]
    size_t relation_table;  // [num_relations, d_kb]
    size_t w_rel0;          // [d_kb + d_w, d_r]
    encoders::SeqEncoderParams encoder;
    std::vector<LayerParamIdx> layers;
    size_t w_final;         // [readout_dim, 1]
};

// Trainable state plus the frozen word table and batch-norm buffers.
struct Model {
    ModelConfig config;
    ParameterStore params;
    ModelParamIdx idx;
    std::vector<BatchNormBuffers> bn;
    encoders::EmbeddingTable words;                 // frozen
    std::vector<Tensor> relation_word_means;        // per relation id, [1, d_w]
    int64_t num_entities = 0;
    int64_t num_relations = 0;
};

// Builds and initializes a model for the given graph. Entity and
// relation rows are copied from the pretrained tables (OOV fallback
// with a warning on stderr for names the tables lack).
Model build_model(const ModelConfig& config, const kg::KnowledgeGraph& graph,
                  const encoders::TranseTables& transe, const encoders::EmbeddingTable& words,
                  RngStream& rng);

// Everything the forward pass needs about one question, precomputed
// once and reused across epochs.
struct CompiledDoc {
    int64_t doc_index = 0;                // into the corpus document list
    std::vector<int64_t> token_words;     // word-table ids, -1 for OOV
    // (local node, token positions) for every in-subgraph mention
    std::vector<std::pair<int32_t, std::vector<int64_t>>> mentions;
};

struct CompiledPair {
    int32_t node_a = 0;  // local node ids, entity(a) < entity(b)
    int32_t node_b = 0;
    int32_t doc = 0;     // index into CompiledInstance::docs
};

struct CompiledDirEdge {
    int32_t src = 0;          // local node ids
    int32_t dst = 0;
    int32_t relation = -1;    // knowledge-graph relation, -1 for document edges
    int32_t pair = -1;        // document pair index, -1 for graph edges
    bool pair_forward = true; // which of the pair's two embeddings applies
};

struct CompiledInstance {
    std::string qid;
    std::vector<int64_t> node_entities;  // global ids, ascending
    std::vector<double> labels;
    std::vector<int64_t> answers;        // gold entity ids (may be empty)
    std::vector<int64_t> query_words;    // word-table ids, -1 for OOV
    std::vector<std::string> query_tokens;
    std::vector<CompiledDoc> docs;
    std::vector<CompiledPair> pairs;
    std::vector<CompiledDirEdge> edges;
    std::vector<std::vector<int32_t>> in_edges;   // per local node
    std::vector<std::vector<int32_t>> out_edges;
};

CompiledInstance compile_instance(const kg::QuestionSubgraph& subgraph,
                                  const kg::QuestionInstance& question,
                                  const std::vector<kg::Document>& documents,
                                  const std::vector<kg::Mention>& mentions, const Model& model);

// Layer-0 quantities shared by every instance on one tape: parameter
// leaves, per-entity initial states, per-relation initial embeddings,
// document encodings, and layer-0 document-relation embeddings.
struct BatchCache {
    std::vector<Var> bound;
    std::vector<Var> entity_rows;    // lazily filled, per entity id
    std::vector<Var> relation_init;  // lazily filled, per relation id
    struct DocEnc {
        Var token_matrix;
        Var mean;
    };
    std::map<int64_t, DocEnc> doc_enc;                                  // by corpus doc index
    std::map<std::tuple<int64_t, int64_t, int64_t>, std::pair<Var, Var>> pair0;  // (a, b, doc)
    std::map<std::pair<int64_t, int64_t>, Var> rel_u;  // (layer, relation) -> h_r0 * W_rel
};

BatchCache make_batch_cache(Tape& tape, const Model& model);

struct ForwardOptions {
    bool training = false;
    RngStream* dropout_rng = nullptr;  // required when training with dropout > 0
};

struct ForwardResult {
    Var probs;  // [n_nodes, 1], entries in (0,1)
    // per layer, per node: attention weight vectors, exposed for tests
    std::vector<std::vector<Var>> alpha_q_in, alpha_q_out;
    std::vector<std::vector<Var>> alpha_gat_in, alpha_gat_out;
    // per layer: input node-state matrix, cluster assignment, and
    // cluster-based node representation (when coarsening is on)
    std::vector<Var> layer_inputs;
    std::vector<Var> cluster_assign;
    std::vector<Var> coarse;
};

ForwardResult forward(Tape& tape, const CompiledInstance& instance, Model& model,
                      BatchCache& cache, const ForwardOptions& options);

// Sum of token states at the given mention positions; a zero vector
// when the entity is unmentioned (empty position list).
Var entity_doc_rep(Tape& tape, Var token_matrix, std::span<const int64_t> positions);

// Directed document-relation embedding pair:
// (relu([rep_i || doc || rep_j] W), relu([rep_j || doc || rep_i] W)).
std::pair<Var, Var> doc_relation_embed(Tape& tape, Var rep_i, Var doc_embed, Var rep_j, Var w_doc_rel);

// Directed edge embedding: relu(h_r W_r + h_neighbor W_v) for outward
// edges; the relation term is negated for inward edges.
Var edge_embed(Tape& tape, Var h_rel, Var h_neighbor, bool inward, Var w_rel, Var w_node);

// Evaluation-mode probabilities on a fresh tape.
std::vector<double> predict_probabilities(const CompiledInstance& instance, Model& model);

// Named-tensor text checkpoint: name<TAB>rows cols<TAB>values. Includes
// batch-norm running statistics.
void save_checkpoint(const Model& model, const std::string& path);
void load_checkpoint(Model& model, const std::string& path);

}  // namespace relgraph::model
