#include "relgraph/encoders.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "relgraph/errors.hpp"

namespace relgraph::encoders {

void EmbeddingTable::add(const std::string& name, Tensor v) {
    if (v.numel() != dim) throw DataError("embedding dimension mismatch for '" + name + "'");
    if (ids.contains(name)) throw DataError("duplicate embedding name '" + name + "'");
    ids.emplace(name, static_cast<int64_t>(names.size()));
    names.push_back(name);
    vectors.push_back(std::move(v));
}

int64_t EmbeddingTable::lookup_id(const std::string& name) const {
    auto it = ids.find(name);
    return it == ids.end() ? -1 : it->second;
}

const Tensor& EmbeddingTable::lookup(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end()) return oov;
    return vectors[static_cast<size_t>(it->second)];
}

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    EmbeddingTable table;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError(path + ": line " + std::to_string(line_no) + ": expected 2 fields");
        std::string name = line.substr(0, tab);
        std::vector<double> values;
        std::istringstream is(line.substr(tab + 1));
        double v;
        while (is >> v) values.push_back(v);
        if (values.empty())
            throw DataError(path + ": line " + std::to_string(line_no) + ": empty vector");
        if (table.dim == 0) table.dim = static_cast<int64_t>(values.size());
        if (static_cast<int64_t>(values.size()) != table.dim)
            throw DataError(path + ": line " + std::to_string(line_no) + ": inconsistent dimension");
        Tensor t = Tensor::row(std::move(values));
        if (name == kOovName) {
            table.oov = t;
        } else {
            table.add(name, std::move(t));
        }
    }
    if (table.dim == 0) throw DataError(path + ": empty embedding file");
    if (table.oov.numel() != table.dim) table.oov = Tensor::zeros({1, table.dim});
    return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    char buf[32];
    auto write_vec = [&](const std::string& name, const Tensor& t) {
        out << name << '\t';
        for (int64_t i = 0; i < t.numel(); ++i) {
            if (i) out << ' ';
            std::snprintf(buf, sizeof(buf), "%.17g", t[i]);
            out << buf;
        }
        out << '\n';
    };
    write_vec(kOovName, table.oov);
    for (size_t i = 0; i < table.names.size(); ++i) write_vec(table.names[i], table.vectors[i]);
}

EmbeddingTable build_word_table(const std::vector<std::string>& vocabulary, int64_t dim,
                                RngStream& rng) {
    EmbeddingTable table;
    table.dim = dim;
    double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    auto draw = [&]() {
        Tensor t({1, dim});
        for (int64_t i = 0; i < dim; ++i) t[i] = rng.gaussian(0.0, scale);
        return t;
    };
    table.oov = draw();
    std::set<std::string> seen;
    for (const std::string& w : vocabulary) {
        if (seen.contains(w) || w == kOovName) continue;
        seen.insert(w);
        table.add(w, draw());
    }
    return table;
}

double transe_energy(const Tensor& s, const Tensor& r, const Tensor& o) {
    double sq = 0.0;
    for (int64_t i = 0; i < s.numel(); ++i) {
        double d = s[i] + r[i] - o[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

TranseTables train_transe(const kg::KnowledgeGraph& graph, const TranseConfig& config,
                          RngStream& rng) {
    if (config.dim < 2) throw DataError("train_transe: dimension must be at least 2");
    if (graph.triples().empty()) throw DataError("train_transe: empty knowledge graph");

    int64_t ne = graph.num_entities();
    int64_t nr = graph.num_relations();
    int64_t d = config.dim;
    double bound = 6.0 / std::sqrt(static_cast<double>(d));

    std::vector<std::vector<double>> ent(static_cast<size_t>(ne), std::vector<double>(static_cast<size_t>(d)));
    std::vector<std::vector<double>> rel(static_cast<size_t>(nr), std::vector<double>(static_cast<size_t>(d)));
    for (auto& v : ent)
        for (double& x : v) x = rng.uniform(-bound, bound);
    for (auto& v : rel) {
        double sq = 0.0;
        for (double& x : v) {
            x = rng.uniform(-bound, bound);
            sq += x * x;
        }
        double norm = std::sqrt(sq);
        if (norm > 0.0)
            for (double& x : v) x /= norm;
    }

    auto energy = [&](int64_t s, int64_t r, int64_t o) {
        double sq = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            double diff = ent[static_cast<size_t>(s)][static_cast<size_t>(i)] +
                          rel[static_cast<size_t>(r)][static_cast<size_t>(i)] -
                          ent[static_cast<size_t>(o)][static_cast<size_t>(i)];
            sq += diff * diff;
        }
        return std::sqrt(sq);
    };

    std::vector<size_t> order(graph.triples().size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t idx : order) {
            const kg::Triple& t = graph.triples()[idx];
            bool corrupt_subject = rng.bernoulli(0.5);
            int64_t cs = t.subject, co = t.object;
            if (corrupt_subject) {
                do { cs = rng.uniform_int(ne); } while (cs == t.subject && ne > 1);
            } else {
                do { co = rng.uniform_int(ne); } while (co == t.object && ne > 1);
            }
            double dp = energy(t.subject, t.relation, t.object);
            double dn = energy(cs, t.relation, co);
            if (config.margin + dp - dn <= 0.0) continue;
            if (dp < 1e-12 || dn < 1e-12) continue;
            // gradient of margin + |s+r-o| - |s'+r-o'|
            for (int64_t i = 0; i < d; ++i) {
                auto ii = static_cast<size_t>(i);
                double up = (ent[static_cast<size_t>(t.subject)][ii] +
                             rel[static_cast<size_t>(t.relation)][ii] -
                             ent[static_cast<size_t>(t.object)][ii]) / dp;
                double un = (ent[static_cast<size_t>(cs)][ii] +
                             rel[static_cast<size_t>(t.relation)][ii] -
                             ent[static_cast<size_t>(co)][ii]) / dn;
                ent[static_cast<size_t>(t.subject)][ii] -= config.lr * up;
                ent[static_cast<size_t>(t.object)][ii] += config.lr * up;
                rel[static_cast<size_t>(t.relation)][ii] -= config.lr * (up - un);
                ent[static_cast<size_t>(cs)][ii] += config.lr * un;
                ent[static_cast<size_t>(co)][ii] -= config.lr * un;
            }
        }
        // project entities onto the unit sphere
        for (auto& v : ent) {
            double sq = 0.0;
            for (double x : v) sq += x * x;
            double norm = std::sqrt(sq);
            if (norm > 0.0)
                for (double& x : v) x /= norm;
        }
    }

    TranseTables tables;
    tables.entities.dim = d;
    tables.relations.dim = d;
    for (int64_t e = 0; e < ne; ++e)
        tables.entities.add(graph.entity_name(e), Tensor({1, d}, std::vector<double>(
            ent[static_cast<size_t>(e)].begin(), ent[static_cast<size_t>(e)].end())));
    for (int64_t r = 0; r < nr; ++r)
        tables.relations.add(graph.relation_name(r), Tensor({1, d}, std::vector<double>(
            rel[static_cast<size_t>(r)].begin(), rel[static_cast<size_t>(r)].end())));
    // OOV vectors drawn after training so lookups of unseen names are defined
    tables.entities.oov = Tensor({1, d});
    tables.relations.oov = Tensor({1, d});
    for (int64_t i = 0; i < d; ++i) {
        tables.entities.oov[i] = rng.uniform(-bound, bound);
        tables.relations.oov[i] = rng.uniform(-bound, bound);
    }
    return tables;
}

Tensor init_weight(int64_t fan_in, int64_t fan_out, RngStream& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t({fan_in, fan_out});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

namespace {

LstmCellIdx register_cell(ParameterStore& store, const std::string& prefix, int64_t input_dim,
                          int64_t hidden, RngStream& rng) {
    LstmCellIdx idx;
    auto wx = [&](const char* gate) {
        return store.add(prefix + ".wx_" + gate, init_weight(input_dim, hidden, rng));
    };
    auto wh = [&](const char* gate) {
        return store.add(prefix + ".wh_" + gate, init_weight(hidden, hidden, rng));
    };
    auto b = [&](const char* gate) { return store.add(prefix + ".b_" + gate, Tensor::zeros({1, hidden})); };
    idx.wx_i = wx("i"); idx.wh_i = wh("i"); idx.b_i = b("i");
    idx.wx_f = wx("f"); idx.wh_f = wh("f"); idx.b_f = b("f");
    idx.wx_g = wx("g"); idx.wh_g = wh("g"); idx.b_g = b("g");
    idx.wx_o = wx("o"); idx.wh_o = wh("o"); idx.b_o = b("o");
    return idx;
}

struct CellStep {
    Var h, c;
};

CellStep lstm_step(Tape& tape, Var x, Var h_prev, Var c_prev, const LstmCellIdx& idx,
                   std::span<const Var> bound) {
    auto gate = [&](size_t wx, size_t wh, size_t b) {
        std::array<Var, 3> parts = {tape.matmul(x, bound[wx]), tape.matmul(h_prev, bound[wh]), bound[b]};
        return tape.add(parts);
    };
    Var i = tape.sigmoid(gate(idx.wx_i, idx.wh_i, idx.b_i));
    Var f = tape.sigmoid(gate(idx.wx_f, idx.wh_f, idx.b_f));
    Var g = tape.tanh_op(gate(idx.wx_g, idx.wh_g, idx.b_g));
    Var o = tape.sigmoid(gate(idx.wx_o, idx.wh_o, idx.b_o));
    CellStep out;
    out.c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
    out.h = tape.mul(o, tape.tanh_op(out.c));
    return out;
}

}  // namespace

SeqEncoderParams register_seq_encoder(ParameterStore& store, const std::string& prefix,
                                      int64_t input_dim, int64_t hidden, RngStream& rng) {
    SeqEncoderParams params;
    params.input_dim = input_dim;
    params.hidden = hidden;
    params.forward = register_cell(store, prefix + ".fw", input_dim, hidden, rng);
    params.backward = register_cell(store, prefix + ".bw", input_dim, hidden, rng);
    return params;
}

EncodedSequence encode_sequence(Tape& tape, std::span<const Var> tokens,
                                const SeqEncoderParams& params, std::span<const Var> bound) {
    if (tokens.empty()) throw DataError("encode_sequence: empty token sequence");
    size_t n = tokens.size();
    Tensor zeros = Tensor::zeros({1, params.hidden});
    Var h0 = tape.constant(zeros);
    Var c0 = tape.constant(zeros);

    std::vector<Var> fw(n), bw(n);
    Var h = h0, c = c0;
    for (size_t t = 0; t < n; ++t) {
        CellStep step = lstm_step(tape, tokens[t], h, c, params.forward, bound);
        h = step.h;
        c = step.c;
        fw[t] = h;
    }
    Var fw_final = h;
    h = h0;
    c = c0;
    for (size_t t = n; t-- > 0;) {
        CellStep step = lstm_step(tape, tokens[t], h, c, params.backward, bound);
        h = step.h;
        c = step.c;
        bw[t] = h;
    }
    Var bw_final = h;

    EncodedSequence out;
    out.token_states.resize(n);
    for (size_t t = 0; t < n; ++t) {
        std::array<Var, 2> parts = {fw[t], bw[t]};
        out.token_states[t] = tape.concat_cols(parts);
    }
    std::array<Var, 2> finals = {fw_final, bw_final};
    out.global = tape.concat_cols(finals);
    return out;
}

Var init_relation(Tape& tape, Var transe_vec, Var word_mean, Var w_rel0) {
    std::array<Var, 2> parts = {transe_vec, word_mean};
    return tape.relu(tape.matmul(tape.concat_cols(parts), w_rel0));
}

std::vector<std::string> relation_name_tokens(const std::string& name) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

Tensor mean_word_vector(const EmbeddingTable& words, const std::vector<std::string>& tokens) {
    Tensor mean = Tensor::zeros({1, words.dim});
    if (tokens.empty()) return mean;
    for (const std::string& t : tokens) {
        const Tensor& v = words.lookup(t);
        for (int64_t i = 0; i < words.dim; ++i) mean[i] += v[i];
    }
    for (int64_t i = 0; i < words.dim; ++i) mean[i] /= static_cast<double>(tokens.size());
    return mean;
}

}  // namespace relgraph::encoders
