#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "relgraph/kg.hpp"
#include "relgraph/params.hpp"
#include "relgraph/rng.hpp"
#include "relgraph/tape.hpp"
#include "relgraph/tensor.hpp"

namespace relgraph::encoders {

inline constexpr const char* kOovName = "<oov>";

// Fixed-dimension name -> vector map with a designated out-of-vocabulary
// vector for unknown names.
struct EmbeddingTable {
    int64_t dim = 0;
    std::vector<std::string> names;
    std::vector<Tensor> vectors;  // [1, dim] each, aligned with names
    std::unordered_map<std::string, int64_t> ids;
    Tensor oov;

    void add(const std::string& name, Tensor v);
    int64_t lookup_id(const std::string& name) const;      // -1 when unknown
    const Tensor& lookup(const std::string& name) const;   // OOV fallback
};

// `name<TAB>v1 v2 ... vd` per line; "<oov>" names the fallback vector.
EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

// Frozen random word-vector table over the given vocabulary
// (deduplicated, in first-appearance order).
EmbeddingTable build_word_table(const std::vector<std::string>& vocabulary, int64_t dim,
                                RngStream& rng);

struct TranseConfig {
    int64_t dim = 16;
    double margin = 1.0;
    int64_t epochs = 200;
    double lr = 0.01;
};

struct TranseTables {
    EmbeddingTable entities;
    EmbeddingTable relations;
};

// Margin-ranking translational embedding trainer: one uniformly
// corrupted endpoint per positive, L2 energy, SGD, entity vectors
// projected to unit norm after each epoch. epochs = 0 returns the
// seeded random initialization untouched.
TranseTables train_transe(const kg::KnowledgeGraph& graph, const TranseConfig& config,
                          RngStream& rng);

double transe_energy(const Tensor& s, const Tensor& r, const Tensor& o);

// Bidirectional recurrent sequence encoder; one parameter set is shared
// by query and document encoding. Parameter tensors live in a
// ParameterStore and are addressed by index.
struct LstmCellIdx {
    size_t wx_i, wh_i, b_i;
    size_t wx_f, wh_f, b_f;
    size_t wx_g, wh_g, b_g;
    size_t wx_o, wh_o, b_o;
};

struct SeqEncoderParams {
    int64_t input_dim = 0;
    int64_t hidden = 0;  // token states have width 2*hidden
    LstmCellIdx forward;
    LstmCellIdx backward;
};

SeqEncoderParams register_seq_encoder(ParameterStore& store, const std::string& prefix,
                                      int64_t input_dim, int64_t hidden, RngStream& rng);

struct EncodedSequence {
    std::vector<Var> token_states;  // [1, 2h] each
    Var global;                     // [1, 2h]: final forward state, final backward state
};

// tokens: one [1, input_dim] Var per token (usually constants from the
// word table). Throws on an empty sequence.
EncodedSequence encode_sequence(Tape& tape, std::span<const Var> tokens,
                                const SeqEncoderParams& params, std::span<const Var> bound);

// relu([transe_vec || word_mean] W): the initial relation embedding.
Var init_relation(Tape& tape, Var transe_vec, Var word_mean, Var w_rel0);

// Relation-name tokens: split on any non-alphanumeric character.
std::vector<std::string> relation_name_tokens(const std::string& name);

// Mean of the word vectors of the given tokens (OOV fallback applies);
// zero vector for an empty list.
Tensor mean_word_vector(const EmbeddingTable& words, const std::vector<std::string>& tokens);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization.
Tensor init_weight(int64_t fan_in, int64_t fan_out, RngStream& rng);

}  // namespace relgraph::encoders
