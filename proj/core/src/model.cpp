#include "relgraph/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "relgraph/errors.hpp"

namespace relgraph::model {

void ModelConfig::validate() const {
    if (layers < 1) throw DataError("model config: layers must be at least 1");
    if (clusters < 1) throw DataError("model config: clusters must be at least 1");
    if (d_kb < 1 || d_w < 1 || d_r < 1 || d_v < 1) throw DataError("model config: dims must be positive");
    if (d_w % 2 != 0) throw DataError("model config: d_w must be even (token states concatenate two directions)");
    if (d_r != d_w)
        throw DataError("model config: d_r must equal d_w (query-relation attention takes their dot product)");
    if (dropout < 0.0 || dropout >= 1.0) throw DataError("model config: dropout must lie in [0,1)");
    if (max_doc_tokens < 1) throw DataError("model config: max_doc_tokens must be positive");
}

Model build_model(const ModelConfig& config, const kg::KnowledgeGraph& graph,
                  const encoders::TranseTables& transe, const encoders::EmbeddingTable& words,
                  RngStream& rng) {
    config.validate();
    if (transe.entities.dim != config.d_kb)
        throw DataError("entity embedding dimension " + std::to_string(transe.entities.dim) +
                        " does not match d_kb " + std::to_string(config.d_kb));
    if (words.dim != config.d_w)
        throw DataError("word vector dimension " + std::to_string(words.dim) +
                        " does not match d_w " + std::to_string(config.d_w));

    Model m;
    m.config = config;
    m.words = words;
    m.num_entities = graph.num_entities();
    m.num_relations = graph.num_relations();

    // entity and relation rows copied from the pretrained tables
    Tensor ent({m.num_entities, config.d_kb});
    int64_t missing = 0;
    for (int64_t e = 0; e < m.num_entities; ++e) {
        const std::string& name = graph.entity_name(e);
        if (transe.entities.lookup_id(name) < 0) ++missing;
        const Tensor& v = transe.entities.lookup(name);
        for (int64_t j = 0; j < config.d_kb; ++j) ent.at(e, j) = v[j];
    }
    if (missing > 0 && !transe.entities.names.empty())
        std::fprintf(stderr, "warning: %lld entities missing from pretrained table, using OOV vector\n",
                     static_cast<long long>(missing));
    Tensor rel({m.num_relations, config.d_kb});
    missing = 0;
    for (int64_t r = 0; r < m.num_relations; ++r) {
        const std::string& name = graph.relation_name(r);
        if (transe.relations.lookup_id(name) < 0) ++missing;
        const Tensor& v = transe.relations.lookup(name);
        for (int64_t j = 0; j < config.d_kb; ++j) rel.at(r, j) = v[j];
    }
    if (missing > 0 && !transe.relations.names.empty())
        std::fprintf(stderr, "warning: %lld relations missing from pretrained table, using OOV vector\n",
                     static_cast<long long>(missing));

    m.idx.entity_table = m.params.add("entity_embeddings", std::move(ent));
    m.idx.relation_table = m.params.add("relation_embeddings", std::move(rel));
    m.idx.w_rel0 = m.params.add("w_rel_init",
                                encoders::init_weight(config.d_kb + config.d_w, config.d_r, rng));
    m.idx.encoder = encoders::register_seq_encoder(m.params, "encoder", config.d_w, config.d_w / 2, rng);

    for (int64_t l = 0; l < config.layers; ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        LayerParamIdx idx;
        int64_t in_dim = config.node_in_dim(l);
        idx.w_doc_rel = m.params.add(p + "w_doc_rel", encoders::init_weight(3 * config.d_w, config.d_r, rng));
        idx.w_rel = m.params.add(p + "w_rel", encoders::init_weight(config.d_r, config.d_v, rng));
        idx.w_node = m.params.add(p + "w_node", encoders::init_weight(in_dim, config.d_v, rng));
        idx.w_edge_in = m.params.add(p + "w_edge_in", encoders::init_weight(config.d_v, config.d_v, rng));
        idx.w_edge_out = m.params.add(p + "w_edge_out", encoders::init_weight(config.d_v, config.d_v, rng));
        idx.w_doc = m.params.add(p + "w_doc", encoders::init_weight(config.d_v, config.d_w, rng));
        idx.w_cluster = m.params.add(p + "w_cluster", encoders::init_weight(in_dim, config.clusters, rng));
        idx.bn_scale = m.params.add(p + "bn_scale", Tensor::full({1, config.d_v}, 1.0));
        idx.bn_shift = m.params.add(p + "bn_shift", Tensor::zeros({1, config.d_v}));
        m.idx.layers.push_back(idx);
    }
    m.idx.w_final = m.params.add("w_final", encoders::init_weight(config.readout_dim(), 1, rng));

    m.bn.resize(static_cast<size_t>(config.layers));
    for (auto& b : m.bn) b.init(config.d_v);

    m.relation_word_means.reserve(static_cast<size_t>(m.num_relations));
    for (int64_t r = 0; r < m.num_relations; ++r) {
        m.relation_word_means.push_back(encoders::mean_word_vector(
            m.words, encoders::relation_name_tokens(graph.relation_name(r))));
    }
    return m;
}

CompiledInstance compile_instance(const kg::QuestionSubgraph& subgraph,
                                  const kg::QuestionInstance& question,
                                  const std::vector<kg::Document>& documents,
                                  const std::vector<kg::Mention>& mentions, const Model& model) {
    CompiledInstance inst;
    inst.qid = question.id;
    inst.node_entities = subgraph.nodes;
    if (!std::is_sorted(inst.node_entities.begin(), inst.node_entities.end()))
        std::sort(inst.node_entities.begin(), inst.node_entities.end());
    inst.labels = subgraph.labels;
    inst.answers = question.answers;
    inst.query_tokens = question.tokens;
    for (const std::string& t : question.tokens) inst.query_words.push_back(model.words.lookup_id(t));

    std::map<int64_t, int32_t> local;
    for (size_t i = 0; i < inst.node_entities.size(); ++i)
        local.emplace(inst.node_entities[i], static_cast<int32_t>(i));

    // attached documents: those named by a candidate pair, ascending
    std::set<int64_t> doc_set;
    for (const kg::DocEdgeCandidate& c : subgraph.doc_edges) doc_set.insert(c.document);
    std::map<int64_t, int32_t> doc_local;
    for (int64_t d : doc_set) {
        const kg::Document& doc = documents.at(static_cast<size_t>(d));
        CompiledDoc cd;
        cd.doc_index = d;
        int64_t limit = std::min<int64_t>(static_cast<int64_t>(doc.tokens.size()), model.config.max_doc_tokens);
        for (int64_t t = 0; t < limit; ++t) cd.token_words.push_back(model.words.lookup_id(doc.tokens[static_cast<size_t>(t)]));
        doc_local.emplace(d, static_cast<int32_t>(inst.docs.size()));
        inst.docs.push_back(std::move(cd));
    }
    // in-subgraph mentions per attached document, node id order
    for (const kg::Mention& m : mentions) {
        auto dit = doc_local.find(m.document);
        if (dit == doc_local.end()) continue;
        auto nit = local.find(m.entity);
        if (nit == local.end()) continue;
        CompiledDoc& cd = inst.docs[static_cast<size_t>(dit->second)];
        std::vector<int64_t> pos;
        for (int64_t p : m.positions) {
            if (p < static_cast<int64_t>(cd.token_words.size())) pos.push_back(p);
        }
        if (!pos.empty()) cd.mentions.emplace_back(nit->second, std::move(pos));
    }
    for (CompiledDoc& cd : inst.docs) {
        std::sort(cd.mentions.begin(), cd.mentions.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
    }

    for (const kg::DocEdgeCandidate& c : subgraph.doc_edges) {
        if (c.entity_a == c.entity_b) throw DataError("self document relation");
        auto ai = local.find(c.entity_a);
        auto bi = local.find(c.entity_b);
        if (ai == local.end() || bi == local.end())
            throw DataError("document edge candidate references an entity outside the node set");
        CompiledPair p;
        p.node_a = std::min(ai->second, bi->second);
        p.node_b = std::max(ai->second, bi->second);
        p.doc = doc_local.at(c.document);
        const CompiledDoc& cd = inst.docs[static_cast<size_t>(p.doc)];
        auto mentioned = [&](int32_t node) {
            for (const auto& m : cd.mentions)
                if (m.first == node) return true;
            return false;
        };
        if (!mentioned(p.node_a) || !mentioned(p.node_b))
            throw DataError("document edge candidate entities are not co-mentioned in document '" +
                            documents.at(static_cast<size_t>(c.document)).id + "'");
        inst.pairs.push_back(p);
    }

    for (const kg::Triple& t : subgraph.edges) {
        auto si = local.find(t.subject);
        auto oi = local.find(t.object);
        if (si == local.end() || oi == local.end())
            throw DataError("subgraph edge references an entity outside the node set");
        CompiledDirEdge e;
        e.src = si->second;
        e.dst = oi->second;
        e.relation = static_cast<int32_t>(t.relation);
        inst.edges.push_back(e);
    }
    for (size_t p = 0; p < inst.pairs.size(); ++p) {
        CompiledDirEdge fwd;
        fwd.src = inst.pairs[p].node_a;
        fwd.dst = inst.pairs[p].node_b;
        fwd.pair = static_cast<int32_t>(p);
        fwd.pair_forward = true;
        inst.edges.push_back(fwd);
        CompiledDirEdge bwd;
        bwd.src = inst.pairs[p].node_b;
        bwd.dst = inst.pairs[p].node_a;
        bwd.pair = static_cast<int32_t>(p);
        bwd.pair_forward = false;
        inst.edges.push_back(bwd);
    }
    // canonical order keyed on global identities so aggregation is
    // invariant under local node relabeling
    auto edge_key = [&](const CompiledDirEdge& e) {
        int64_t doc_global = e.pair >= 0 ? inst.docs[static_cast<size_t>(inst.pairs[static_cast<size_t>(e.pair)].doc)].doc_index : -1;
        return std::make_tuple(inst.node_entities[static_cast<size_t>(e.src)],
                               inst.node_entities[static_cast<size_t>(e.dst)],
                               e.pair >= 0 ? 1 : 0, static_cast<int64_t>(e.relation), doc_global);
    };
    std::sort(inst.edges.begin(), inst.edges.end(),
              [&](const CompiledDirEdge& a, const CompiledDirEdge& b) { return edge_key(a) < edge_key(b); });

    inst.in_edges.resize(inst.node_entities.size());
    inst.out_edges.resize(inst.node_entities.size());
    for (size_t i = 0; i < inst.edges.size(); ++i) {
        inst.out_edges[static_cast<size_t>(inst.edges[i].src)].push_back(static_cast<int32_t>(i));
        inst.in_edges[static_cast<size_t>(inst.edges[i].dst)].push_back(static_cast<int32_t>(i));
    }
    return inst;
}

BatchCache make_batch_cache(Tape& tape, const Model& model) {
    BatchCache cache;
    cache.bound = bind_parameters(tape, model.params);
    cache.entity_rows.assign(static_cast<size_t>(model.num_entities), Var());
    cache.relation_init.assign(static_cast<size_t>(model.num_relations), Var());
    return cache;
}

namespace {

Var word_const(Tape& tape, const Model& model, int64_t word_id) {
    if (word_id < 0) return tape.constant(model.words.oov);
    return tape.constant(model.words.vectors[static_cast<size_t>(word_id)]);
}

Var entity_row(Tape& tape, const Model& model, BatchCache& cache, int64_t entity) {
    Var& v = cache.entity_rows[static_cast<size_t>(entity)];
    if (!v.valid()) v = tape.row(cache.bound[model.idx.entity_table], entity);
    return v;
}

// h_r^(0) = relu([TransE(r) || mean word vector] * W_r0)
Var relation_init(Tape& tape, const Model& model, BatchCache& cache, int64_t rel) {
    Var& v = cache.relation_init[static_cast<size_t>(rel)];
    if (!v.valid()) {
        Var trans = tape.row(cache.bound[model.idx.relation_table], rel);
        Var words = tape.constant(model.relation_word_means[static_cast<size_t>(rel)]);
        v = encoders::init_relation(tape, trans, words, cache.bound[model.idx.w_rel0]);
    }
    return v;
}

BatchCache::DocEnc doc_encoding(Tape& tape, const Model& model, BatchCache& cache,
                                const CompiledDoc& doc) {
    auto it = cache.doc_enc.find(doc.doc_index);
    if (it != cache.doc_enc.end()) return it->second;
    std::vector<Var> tokens;
    tokens.reserve(doc.token_words.size());
    for (int64_t w : doc.token_words) tokens.push_back(word_const(tape, model, w));
    encoders::EncodedSequence enc = encoders::encode_sequence(tape, tokens, model.idx.encoder, cache.bound);
    BatchCache::DocEnc out;
    out.token_matrix = tape.stack_rows(enc.token_states);
    out.mean = tape.mean_rows(out.token_matrix);
    cache.doc_enc.emplace(doc.doc_index, out);
    return out;
}

Var rel_u(Tape& tape, const Model& model, BatchCache& cache, int64_t layer, int64_t rel) {
    auto key = std::make_pair(layer, rel);
    auto it = cache.rel_u.find(key);
    if (it != cache.rel_u.end()) return it->second;
    Var u = tape.matmul(relation_init(tape, model, cache, rel),
                        cache.bound[model.idx.layers[static_cast<size_t>(layer)].w_rel]);
    cache.rel_u.emplace(key, u);
    return u;
}

}  // namespace

ForwardResult forward(Tape& tape, const CompiledInstance& inst, Model& model, BatchCache& cache,
                      const ForwardOptions& options) {
    const ModelConfig& cfg = model.config;
    const auto& bound = cache.bound;
    int64_t n = static_cast<int64_t>(inst.node_entities.size());
    if (n == 0) throw DataError("forward: empty subgraph");
    if (options.training && cfg.dropout > 0.0 && options.dropout_rng == nullptr)
        throw std::invalid_argument("forward: training with dropout requires an RNG stream");

    bool use_docs = cfg.use_doc_relations && !inst.pairs.empty();

    // query
    std::vector<Var> qtokens;
    qtokens.reserve(inst.query_words.size());
    for (int64_t w : inst.query_words) qtokens.push_back(word_const(tape, model, w));
    Var h_q = encoders::encode_sequence(tape, qtokens, model.idx.encoder, cache.bound).global;

    // initial node states
    std::vector<Var> state(static_cast<size_t>(n));
    for (int64_t v = 0; v < n; ++v)
        state[static_cast<size_t>(v)] = entity_row(tape, model, cache, inst.node_entities[static_cast<size_t>(v)]);

    // attached documents
    std::vector<Var> doc_state(inst.docs.size()), doc_mean(inst.docs.size());
    if (use_docs) {
        for (size_t d = 0; d < inst.docs.size(); ++d) {
            BatchCache::DocEnc enc = doc_encoding(tape, model, cache, inst.docs[d]);
            doc_state[d] = enc.token_matrix;
            doc_mean[d] = enc.mean;
        }
    }

    auto edge_active = [&](const CompiledDirEdge& e) { return e.pair < 0 || use_docs; };

    // layer-0 document-relation embeddings, shared across the batch
    std::vector<std::pair<Var, Var>> pair_embed(inst.pairs.size());
    auto compute_pair_embeds = [&](int64_t layer, const std::vector<Var>& reps_cacheable) {
        (void)reps_cacheable;
        const LayerParamIdx& lp = model.idx.layers[static_cast<size_t>(layer)];
        // per (doc, node) textual entity representation at this layer
        std::map<std::pair<int32_t, int32_t>, Var> reps;
        auto rep = [&](int32_t doc, int32_t node) {
            auto key = std::make_pair(doc, node);
            auto it = reps.find(key);
            if (it != reps.end()) return it->second;
            const CompiledDoc& cd = inst.docs[static_cast<size_t>(doc)];
            Var out;
            for (const auto& m : cd.mentions) {
                if (m.first != node) continue;
                out = tape.gather_sum_rows(doc_state[static_cast<size_t>(doc)], m.second);
                break;
            }
            reps.emplace(key, out);
            return out;
        };
        for (size_t p = 0; p < inst.pairs.size(); ++p) {
            const CompiledPair& pr = inst.pairs[p];
            if (layer == 0) {
                auto key = std::make_tuple(inst.node_entities[static_cast<size_t>(pr.node_a)],
                                           inst.node_entities[static_cast<size_t>(pr.node_b)],
                                           inst.docs[static_cast<size_t>(pr.doc)].doc_index);
                auto it = cache.pair0.find(key);
                if (it != cache.pair0.end()) {
                    pair_embed[p] = it->second;
                    continue;
                }
                Var ra = rep(pr.doc, pr.node_a);
                Var rb = rep(pr.doc, pr.node_b);
                std::array<Var, 3> fwd_parts = {ra, doc_mean[static_cast<size_t>(pr.doc)], rb};
                std::array<Var, 3> bwd_parts = {rb, doc_mean[static_cast<size_t>(pr.doc)], ra};
                Var fwd = tape.relu(tape.matmul(tape.concat_cols(fwd_parts), bound[lp.w_doc_rel]));
                Var bwd = tape.relu(tape.matmul(tape.concat_cols(bwd_parts), bound[lp.w_doc_rel]));
                pair_embed[p] = {fwd, bwd};
                cache.pair0.emplace(key, pair_embed[p]);
            } else {
                Var ra = rep(pr.doc, pr.node_a);
                Var rb = rep(pr.doc, pr.node_b);
                std::array<Var, 3> fwd_parts = {ra, doc_mean[static_cast<size_t>(pr.doc)], rb};
                std::array<Var, 3> bwd_parts = {rb, doc_mean[static_cast<size_t>(pr.doc)], ra};
                pair_embed[p] = {tape.relu(tape.matmul(tape.concat_cols(fwd_parts), bound[lp.w_doc_rel])),
                                 tape.relu(tape.matmul(tape.concat_cols(bwd_parts), bound[lp.w_doc_rel]))};
            }
        }
    };
    if (use_docs) compute_pair_embeds(0, {});

    // query-similarity attention from layer-0 embeddings; identical at
    // every layer by construction
    auto doc_edge_embed0 = [&](const CompiledDirEdge& e) {
        const auto& pe = pair_embed[static_cast<size_t>(e.pair)];
        return e.pair_forward ? pe.first : pe.second;
    };
    std::vector<Var> aq_in(static_cast<size_t>(n)), aq_out(static_cast<size_t>(n));
    auto alpha_q_group = [&](const std::vector<int32_t>& group) {
        std::vector<Var> scores;
        for (int32_t ei : group) {
            const CompiledDirEdge& e = inst.edges[static_cast<size_t>(ei)];
            if (!edge_active(e)) continue;
            Var rel0 = e.pair < 0 ? relation_init(tape, model, cache, e.relation) : doc_edge_embed0(e);
            scores.push_back(tape.dot(rel0, h_q));
        }
        if (scores.empty()) return Var();
        return tape.softmax(tape.concat_cols(scores));
    };
    for (int64_t v = 0; v < n; ++v) {
        aq_in[static_cast<size_t>(v)] = alpha_q_group(inst.in_edges[static_cast<size_t>(v)]);
        if (cfg.use_bidir_attention)
            aq_out[static_cast<size_t>(v)] = alpha_q_group(inst.out_edges[static_cast<size_t>(v)]);
    }

    ForwardResult result;
    result.alpha_q_in.resize(static_cast<size_t>(cfg.layers));
    result.alpha_q_out.resize(static_cast<size_t>(cfg.layers));
    result.alpha_gat_in.resize(static_cast<size_t>(cfg.layers));
    result.alpha_gat_out.resize(static_cast<size_t>(cfg.layers));

    std::vector<Var> coarse_blocks;

    for (int64_t l = 0; l < cfg.layers; ++l) {
        const LayerParamIdx& lp = model.idx.layers[static_cast<size_t>(l)];
        Var H = tape.stack_rows(state);
        result.layer_inputs.push_back(H);

        if (cfg.use_coarsening) {
            Var logits = tape.matmul(H, bound[lp.w_cluster]);
            std::vector<Var> c_rows(static_cast<size_t>(n));
            for (int64_t v = 0; v < n; ++v)
                c_rows[static_cast<size_t>(v)] = tape.softmax(tape.row(logits, v));
            Var C = tape.stack_rows(c_rows);
            result.cluster_assign.push_back(C);
            Var centroids = tape.matmul_t1(C, H);   // [clusters, d]
            coarse_blocks.push_back(tape.matmul(C, centroids));  // [n, d]
            result.coarse.push_back(coarse_blocks.back());
        }

        if (use_docs && l > 0) compute_pair_embeds(l, {});

        // per-node self transform, shared with Eq. 2 neighbor terms
        std::vector<Var> a_node(static_cast<size_t>(n));
        for (int64_t v = 0; v < n; ++v)
            a_node[static_cast<size_t>(v)] = tape.matmul(state[static_cast<size_t>(v)], bound[lp.w_node]);

        // directed edge embeddings and attention scores
        std::vector<Var> edge_u(inst.edges.size());
        std::vector<Var> edge_out_form(inst.edges.size()), edge_in_form(inst.edges.size());
        std::vector<Var> edge_gat_score(inst.edges.size());
        for (size_t ei = 0; ei < inst.edges.size(); ++ei) {
            const CompiledDirEdge& e = inst.edges[ei];
            if (!edge_active(e)) continue;
            Var u = e.pair < 0 ? rel_u(tape, model, cache, l, e.relation)
                               : tape.matmul(e.pair_forward ? pair_embed[static_cast<size_t>(e.pair)].first
                                                            : pair_embed[static_cast<size_t>(e.pair)].second,
                                             bound[lp.w_rel]);
            edge_u[ei] = u;
            Var a_dst = a_node[static_cast<size_t>(e.dst)];
            Var a_src = a_node[static_cast<size_t>(e.src)];
            edge_out_form[ei] = tape.relu(tape.add(u, a_dst));
            edge_in_form[ei] = tape.relu(tape.add(tape.neg(u), a_src));
            if (cfg.use_bidir_attention) {
                Var inverted = tape.relu(tape.add(u, a_src));
                edge_gat_score[ei] = tape.dot(edge_out_form[ei], inverted);
            }
        }

        result.alpha_q_in[static_cast<size_t>(l)] = aq_in;
        result.alpha_q_out[static_cast<size_t>(l)] = aq_out;
        result.alpha_gat_in[static_cast<size_t>(l)].assign(static_cast<size_t>(n), Var());
        result.alpha_gat_out[static_cast<size_t>(l)].assign(static_cast<size_t>(n), Var());

        std::vector<Var> updated(static_cast<size_t>(n));
        for (int64_t v = 0; v < n; ++v) {
            std::vector<Var> terms;
            terms.push_back(a_node[static_cast<size_t>(v)]);

            auto direction_term = [&](const std::vector<int32_t>& group, bool inward) -> Var {
                std::vector<Var> values;
                std::vector<Var> gat_scores;
                for (int32_t ei : group) {
                    const CompiledDirEdge& e = inst.edges[static_cast<size_t>(ei)];
                    if (!edge_active(e)) continue;
                    values.push_back(inward ? edge_in_form[static_cast<size_t>(ei)]
                                            : edge_out_form[static_cast<size_t>(ei)]);
                    if (cfg.use_bidir_attention) gat_scores.push_back(edge_gat_score[static_cast<size_t>(ei)]);
                }
                if (values.empty()) return Var();
                Var weights = inward ? aq_in[static_cast<size_t>(v)] : aq_out[static_cast<size_t>(v)];
                if (cfg.use_bidir_attention) {
                    Var gat = tape.softmax(tape.concat_cols(gat_scores));
                    auto& slot = inward ? result.alpha_gat_in[static_cast<size_t>(l)]
                                        : result.alpha_gat_out[static_cast<size_t>(l)];
                    slot[static_cast<size_t>(v)] = gat;
                    weights = tape.add(weights, gat);
                }
                Var summed = tape.weighted_sum(weights, values);
                return tape.matmul(summed, bound[inward ? lp.w_edge_in : lp.w_edge_out]);
            };

            Var in_term = direction_term(inst.in_edges[static_cast<size_t>(v)], true);
            if (in_term.valid()) terms.push_back(in_term);
            if (cfg.use_bidir_attention) {
                Var out_term = direction_term(inst.out_edges[static_cast<size_t>(v)], false);
                if (out_term.valid()) terms.push_back(out_term);
            }
            updated[static_cast<size_t>(v)] = tape.relu(tape.add(terms));
        }

        Var U = tape.stack_rows(updated);
        U = tape.batch_norm(U, bound[lp.bn_scale], bound[lp.bn_shift], &model.bn[static_cast<size_t>(l)],
                            options.training);
        if (options.training && cfg.dropout > 0.0) U = tape.dropout(U, cfg.dropout, *options.dropout_rng);
        for (int64_t v = 0; v < n; ++v) state[static_cast<size_t>(v)] = tape.row(U, v);

        // inject updated node states back into mention positions
        if (use_docs) {
            for (size_t d = 0; d < inst.docs.size(); ++d) {
                const CompiledDoc& cd = inst.docs[d];
                std::vector<Var> vecs;
                std::vector<int64_t> rows;
                for (const auto& m : cd.mentions) {
                    Var w = tape.matmul(state[static_cast<size_t>(m.first)], bound[lp.w_doc]);
                    for (int64_t p : m.second) {
                        vecs.push_back(w);
                        rows.push_back(p);
                    }
                }
                if (vecs.empty()) continue;
                doc_state[d] = tape.scatter_add_rows(doc_state[d], vecs, rows);
                doc_mean[d] = tape.mean_rows(doc_state[d]);
            }
        }
    }

    Var H_final = tape.stack_rows(state);
    Var readout_input;
    if (cfg.use_coarsening) {
        coarse_blocks.push_back(H_final);
        readout_input = tape.concat_cols(coarse_blocks);
    } else {
        readout_input = H_final;
    }
    result.probs = tape.sigmoid(tape.matmul(readout_input, bound[model.idx.w_final]));
    return result;
}

Var entity_doc_rep(Tape& tape, Var token_matrix, std::span<const int64_t> positions) {
    if (positions.empty()) return tape.constant(Tensor::zeros({1, tape.cols(token_matrix)}));
    return tape.gather_sum_rows(token_matrix, positions);
}

std::pair<Var, Var> doc_relation_embed(Tape& tape, Var rep_i, Var doc_embed, Var rep_j, Var w_doc_rel) {
    std::array<Var, 3> fwd = {rep_i, doc_embed, rep_j};
    std::array<Var, 3> bwd = {rep_j, doc_embed, rep_i};
    return {tape.relu(tape.matmul(tape.concat_cols(fwd), w_doc_rel)),
            tape.relu(tape.matmul(tape.concat_cols(bwd), w_doc_rel))};
}

Var edge_embed(Tape& tape, Var h_rel, Var h_neighbor, bool inward, Var w_rel, Var w_node) {
    Var u = tape.matmul(h_rel, w_rel);
    if (inward) u = tape.neg(u);
    return tape.relu(tape.add(u, tape.matmul(h_neighbor, w_node)));
}

std::vector<double> predict_probabilities(const CompiledInstance& instance, Model& model) {
    Tape tape;
    BatchCache cache = make_batch_cache(tape, model);
    ForwardOptions options;
    options.training = false;
    ForwardResult r = forward(tape, instance, model, cache, options);
    auto span = tape.value(r.probs);
    return std::vector<double>(span.begin(), span.end());
}

void save_checkpoint(const Model& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    char buf[32];
    auto write_tensor = [&](const std::string& name, const Tensor& t) {
        out << name << '\t' << t.rows() << ' ' << t.cols() << '\t';
        for (int64_t i = 0; i < t.numel(); ++i) {
            if (i) out << ' ';
            std::snprintf(buf, sizeof(buf), "%.17g", t[i]);
            out << buf;
        }
        out << '\n';
    };
    for (size_t i = 0; i < model.params.size(); ++i) write_tensor(model.params.name(i), model.params.at(i));
    for (size_t l = 0; l < model.bn.size(); ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        write_tensor(p + "bn_running_mean",
                     Tensor({1, static_cast<int64_t>(model.bn[l].mean.size())},
                            std::vector<double>(model.bn[l].mean.begin(), model.bn[l].mean.end())));
        write_tensor(p + "bn_running_var",
                     Tensor({1, static_cast<int64_t>(model.bn[l].var.size())},
                            std::vector<double>(model.bn[l].var.begin(), model.bn[l].var.end())));
    }
}

void load_checkpoint(Model& model, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::map<std::string, Tensor> tensors;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab1 = line.find('\t');
        auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
        if (tab2 == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 3 fields");
        std::string name = line.substr(0, tab1);
        std::istringstream shape_in(line.substr(tab1 + 1, tab2 - tab1 - 1));
        int64_t rows = 0, cols = 0;
        if (!(shape_in >> rows >> cols) || rows < 1 || cols < 1)
            throw DataError(path + ": line " + std::to_string(line_no) + ": bad shape");
        std::istringstream val_in(line.substr(tab2 + 1));
        std::vector<double> values;
        values.reserve(static_cast<size_t>(rows * cols));
        double v;
        while (val_in >> v) values.push_back(v);
        if (static_cast<int64_t>(values.size()) != rows * cols)
            throw DataError(path + ": line " + std::to_string(line_no) + ": value count does not match shape");
        if (tensors.contains(name))
            throw DataError(path + ": line " + std::to_string(line_no) + ": duplicate tensor '" + name + "'");
        tensors.emplace(name, Tensor({rows, cols}, std::move(values)));
    }

    std::set<std::string> consumed;
    for (size_t i = 0; i < model.params.size(); ++i) {
        const std::string& name = model.params.name(i);
        auto it = tensors.find(name);
        if (it == tensors.end()) throw DataError(path + ": missing tensor '" + name + "'");
        if (!it->second.same_shape(model.params.at(i)))
            throw DataError(path + ": tensor '" + name + "' has shape " + it->second.shape_string() +
                            ", expected " + model.params.at(i).shape_string());
        model.params.at(i) = it->second;
        consumed.insert(name);
    }
    for (size_t l = 0; l < model.bn.size(); ++l) {
        std::string p = "layers." + std::to_string(l) + ".";
        for (bool is_mean : {true, false}) {
            std::string name = p + (is_mean ? "bn_running_mean" : "bn_running_var");
            auto it = tensors.find(name);
            if (it == tensors.end()) throw DataError(path + ": missing tensor '" + name + "'");
            if (it->second.numel() != static_cast<int64_t>(model.bn[l].mean.size()))
                throw DataError(path + ": tensor '" + name + "' has unexpected size");
            auto& dst = is_mean ? model.bn[l].mean : model.bn[l].var;
            dst.assign(it->second.values().begin(), it->second.values().end());
            consumed.insert(name);
        }
    }
    for (const auto& [name, t] : tensors) {
        if (!consumed.contains(name))
            throw DataError(path + ": unexpected tensor '" + name + "'");
    }
}

}  // namespace relgraph::model
