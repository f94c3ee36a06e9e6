#include "relgraph/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "relgraph/config.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/kg.hpp"
#include "relgraph/model.hpp"
#include "relgraph/retrieval.hpp"
#include "relgraph/synthetic.hpp"
#include "relgraph/train.hpp"

namespace relgraph::cli {

namespace fs = std::filesystem;

namespace {

const char* kUsage =
    "usage: relgraph <command> [options]\n"
    "\n"
    "commands:\n"
    "  gen       generate the synthetic benchmark (kg, documents, questions)\n"
    "  pretrain  train entity/relation embeddings and build the word table\n"
    "  link      link documents to entities (mentions file)\n"
    "  subgraph  extract per-question subgraphs with personalized pagerank\n"
    "  train     train the model on the extracted subgraphs\n"
    "  eval      compute F1/Hits@1 metrics for a trained model\n"
    "  ablate    run the component-masking study (4-row table)\n"
    "  predict   rank candidate answers per question\n"
    "\n"
    "common options:\n"
    "  --config PATH   key = value configuration file\n"
    "  --seed N        random seed (key: seed)\n"
    "  --out DIR       output directory (key: out)\n"
    "  --data DIR      dataset directory (key: data; defaults to --out)\n"
    "  --threads N     worker threads; 1 is bitwise reproducible\n"
    "  --set K=V       set any configuration key\n"
    "\n"
    "command options:\n"
    "  --model DIR     trained model directory (eval, predict)\n"
    "  --split NAME    train | val | test (eval, predict; default test)\n"
    "  --threshold X   decision threshold; 'auto' uses the stored one\n"
    "  --noise X       mention drop probability (link)\n"
    "  --budget K      subgraph node budget (subgraph)\n"
    "  --seeds N       runs per ablation row (ablate)\n";

const char* kSplits[3] = {"train", "val", "test"};

struct Workspace {
    kg::KnowledgeGraph graph;
    std::vector<kg::Document> docs;
    std::vector<kg::Mention> mentions;
    std::vector<kg::QuestionInstance> questions[3];
    std::vector<kg::QuestionSubgraph> subgraphs[3];
};

std::string data_dir(const RunConfig& cfg) {
    std::string d = cfg.get("data");
    return d.empty() ? cfg.get("out") : d;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw DataError("missing file: " + path);
}

Workspace load_workspace(const RunConfig& cfg, bool need_mentions, bool need_subgraphs) {
    Workspace ws;
    std::string dir = data_dir(cfg);
    require_file(dir + "/kg.tsv");
    auto loaded = kg::load_kg(dir + "/kg.tsv");
    if (loaded.duplicates_dropped > 0)
        std::fprintf(stderr, "note: %lld duplicate triples dropped\n",
                     static_cast<long long>(loaded.duplicates_dropped));
    ws.graph = std::move(loaded.graph);
    int64_t max_tokens = cfg.get_int("model.max_doc_tokens");
    require_file(dir + "/docs.tsv");
    ws.docs = kg::load_documents(dir + "/docs.tsv", max_tokens);
    if (need_mentions) {
        require_file(dir + "/mentions.tsv");
        ws.mentions = kg::load_mentions(dir + "/mentions.tsv", ws.graph, ws.docs);
    }
    for (int s = 0; s < 3; ++s) {
        std::string qpath = dir + "/questions_" + kSplits[s] + ".tsv";
        if (fs::exists(qpath)) ws.questions[s] = kg::load_questions(qpath, ws.graph);
        if (need_subgraphs) {
            std::string spath = dir + "/subgraphs_" + kSplits[s] + ".tsv";
            if (fs::exists(spath)) ws.subgraphs[s] = retrieval::load_subgraphs(spath, ws.graph, ws.docs);
        }
    }
    return ws;
}

encoders::TranseTables load_transe(const std::string& dir) {
    encoders::TranseTables t;
    require_file(dir + "/entity_embeddings.txt");
    require_file(dir + "/relation_embeddings.txt");
    t.entities = encoders::load_embeddings(dir + "/entity_embeddings.txt");
    t.relations = encoders::load_embeddings(dir + "/relation_embeddings.txt");
    return t;
}

encoders::TranseTables empty_transe(int64_t dim) {
    encoders::TranseTables t;
    t.entities.dim = dim;
    t.entities.oov = Tensor::zeros({1, dim});
    t.relations.dim = dim;
    t.relations.oov = Tensor::zeros({1, dim});
    return t;
}

std::vector<model::CompiledInstance> compile_split(const Workspace& ws, int split,
                                                   const model::Model& m) {
    std::unordered_map<std::string, const kg::QuestionInstance*> by_id;
    for (const auto& q : ws.questions[split]) by_id.emplace(q.id, &q);
    std::vector<model::CompiledInstance> out;
    out.reserve(ws.subgraphs[split].size());
    for (const auto& sg : ws.subgraphs[split]) {
        auto it = by_id.find(sg.question_id);
        if (it == by_id.end())
            throw DataError("subgraph question '" + sg.question_id + "' not found in questions_" +
                            std::string(kSplits[split]) + ".tsv");
        out.push_back(model::compile_instance(sg, *it->second, ws.docs, ws.mentions, m));
    }
    return out;
}

// model directory artifacts: the model config comes from the stored
// effective configuration, never the caller's
model::Model load_model_dir(const RunConfig& cfg, const kg::KnowledgeGraph& graph) {
    std::string dir = cfg.get("model_dir");
    if (dir.empty()) throw UsageError("--model DIR is required");
    require_file(dir + "/effective.cfg");
    require_file(dir + "/checkpoint.txt");
    require_file(dir + "/word_vectors.txt");
    RunConfig stored;
    stored.load_file(dir + "/effective.cfg");
    model::ModelConfig mc = stored.model_config();
    encoders::EmbeddingTable words = encoders::load_embeddings(dir + "/word_vectors.txt");
    RngStream rng(0);
    model::Model m = model::build_model(mc, graph, empty_transe(mc.d_kb), words, rng);
    model::load_checkpoint(m, dir + "/checkpoint.txt");
    return m;
}

double stored_threshold(const std::string& model_dir) {
    std::ifstream in(model_dir + "/threshold.txt");
    if (!in) throw DataError("missing file: " + model_dir + "/threshold.txt");
    double t = 0.0;
    if (!(in >> t)) throw DataError("malformed threshold file in " + model_dir);
    return t;
}

double resolve_threshold(const RunConfig& cfg) {
    const std::string& t = cfg.get("eval.threshold");
    if (t == "auto") return stored_threshold(cfg.get("model_dir"));
    double v = cfg.get_double("eval.threshold");
    if (v <= 0.0 || v >= 1.0) throw DataError("threshold must lie in (0,1)");
    return v;
}

int split_index(const RunConfig& cfg) {
    const std::string& s = cfg.get("split");
    for (int i = 0; i < 3; ++i)
        if (s == kSplits[i]) return i;
    throw UsageError("unknown split '" + s + "' (expected train, val, or test)");
}

void emit_effective(const RunConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    cfg.emit(dir + "/effective.cfg");
}

int cmd_gen(const RunConfig& cfg) {
    kg::SyntheticData data = kg::gen_synthetic(cfg.gen_config());
    std::string out = cfg.get("out");
    kg::write_dataset(data, out);
    emit_effective(cfg, out);
    std::fprintf(stderr,
                 "generated %lld entities, %lld relations, %zu triples, %zu documents; "
                 "questions: %lld graph, %lld doc-only, %lld unanswerable\n",
                 static_cast<long long>(data.graph.num_entities()),
                 static_cast<long long>(data.graph.num_relations()), data.graph.triples().size(),
                 data.documents.size(), static_cast<long long>(data.stats.kg_questions),
                 static_cast<long long>(data.stats.doc_only_questions),
                 static_cast<long long>(data.stats.unanswerable_questions));
    return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, false, false);
    std::string out = cfg.get("out");
    fs::create_directories(out);

    RngStream transe_rng(cfg.get_u64("seed"), 11);
    encoders::TranseTables tables = encoders::train_transe(ws.graph, cfg.transe_config(), transe_rng);
    encoders::save_embeddings(tables.entities, out + "/entity_embeddings.txt");
    encoders::save_embeddings(tables.relations, out + "/relation_embeddings.txt");

    // vocabulary: document tokens, question tokens, relation-name tokens
    std::vector<std::string> vocab;
    for (const auto& d : ws.docs) vocab.insert(vocab.end(), d.tokens.begin(), d.tokens.end());
    for (int s = 0; s < 3; ++s)
        for (const auto& q : ws.questions[s]) vocab.insert(vocab.end(), q.tokens.begin(), q.tokens.end());
    for (int64_t r = 0; r < ws.graph.num_relations(); ++r) {
        auto toks = encoders::relation_name_tokens(ws.graph.relation_name(r));
        vocab.insert(vocab.end(), toks.begin(), toks.end());
    }
    RngStream word_rng(cfg.get_u64("seed"), 13);
    encoders::EmbeddingTable words =
        encoders::build_word_table(vocab, cfg.get_int("model.d_w"), word_rng);
    encoders::save_embeddings(words, out + "/word_vectors.txt");
    emit_effective(cfg, out);
    std::fprintf(stderr, "pretrained %zu entity and %zu relation vectors; word table of %zu tokens\n",
                 tables.entities.names.size(), tables.relations.names.size(), words.names.size());
    return 0;
}

int cmd_link(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, false, false);
    std::string out = cfg.get("out");
    fs::create_directories(out);
    double noise = cfg.get_double("link.noise");
    RngStream rng(cfg.get_u64("seed"), 17);
    std::vector<kg::Mention> mentions = kg::link_documents(ws.graph, ws.docs, noise, rng);
    kg::save_mentions(mentions, ws.graph, ws.docs, out + "/mentions.tsv");
    emit_effective(cfg, out);
    std::fprintf(stderr, "linked %zu mentions at noise %g\n", mentions.size(), noise);
    return 0;
}

int cmd_subgraph(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, true, false);
    std::string out = cfg.get("out");
    fs::create_directories(out);
    retrieval::PprConfig ppr_cfg = cfg.ppr_config();
    int64_t budget = cfg.get_int("retrieval.budget");
    for (int s = 0; s < 3; ++s) {
        if (ws.questions[s].empty()) continue;
        std::vector<kg::QuestionSubgraph> subgraphs;
        subgraphs.reserve(ws.questions[s].size());
        for (const auto& q : ws.questions[s])
            subgraphs.push_back(retrieval::extract_subgraph(ws.graph, q, ws.mentions, budget, ppr_cfg));
        retrieval::save_subgraphs(subgraphs, ws.graph, ws.docs, out + "/subgraphs_" +
                                  std::string(kSplits[s]) + ".tsv");
        std::fprintf(stderr, "%s: %zu subgraphs, answer recall %.4f\n", kSplits[s], subgraphs.size(),
                     retrieval::answer_recall(subgraphs, ws.questions[s]));
    }
    emit_effective(cfg, out);
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, true, true);
    if (ws.subgraphs[0].empty() || ws.subgraphs[1].empty())
        throw DataError("train requires subgraphs_train.tsv and subgraphs_val.tsv in " + data_dir(cfg));
    std::string dir = data_dir(cfg);
    encoders::TranseTables transe = load_transe(dir);
    require_file(dir + "/word_vectors.txt");
    encoders::EmbeddingTable words = encoders::load_embeddings(dir + "/word_vectors.txt");

    model::ModelConfig mc = cfg.model_config();
    train::TrainConfig tc = cfg.train_config();
    RngStream init_rng(tc.seed, 7);
    model::Model m = model::build_model(mc, ws.graph, transe, words, init_rng);

    auto train_split = compile_split(ws, 0, m);
    auto val_split = compile_split(ws, 1, m);

    train::TrainResult result = train::train(m, train_split, val_split, tc);

    auto val_probs = train::predict_split(m, val_split, tc.threads);
    auto val_evals = train::make_evals(val_split, val_probs);
    double threshold = train::tune_threshold(val_evals);

    std::string out = cfg.get("out");
    fs::create_directories(out);
    model::save_checkpoint(m, out + "/checkpoint.txt");
    {
        std::ofstream tf(out + "/threshold.txt");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g\n", threshold);
        tf << buf;
    }
    train::write_train_log(result, out + "/train_log.tsv");
    fs::copy_file(dir + "/word_vectors.txt", out + "/word_vectors.txt",
                  fs::copy_options::overwrite_existing);
    emit_effective(cfg, out);

    train::Metrics val_m = train::compute_metrics(val_evals, threshold);
    std::fprintf(stderr,
                 "trained %zu epochs (best %lld, val F1_avg %.4f); threshold %.2f; "
                 "val: F1_micro %.4f F1_macro %.4f F1_avg %.4f Hits@1 %.4f\n",
                 result.log.size(), static_cast<long long>(result.best_epoch), result.best_val_f1avg,
                 threshold, val_m.f1_micro, val_m.f1_macro, val_m.f1_avg, val_m.hits_at_1);
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, true, true);
    int split = split_index(cfg);
    if (ws.subgraphs[split].empty())
        throw DataError("no subgraphs for split '" + std::string(kSplits[split]) + "' in " + data_dir(cfg));
    model::Model m = load_model_dir(cfg, ws.graph);
    auto instances = compile_split(ws, split, m);
    double threshold = resolve_threshold(cfg);
    train::Metrics metrics = train::evaluate(m, instances, threshold, cfg.get_int("threads"));

    std::vector<train::AblationRow> rows = {{std::string(kSplits[split]) + " split", metrics}};
    std::string table = train::format_metrics_table(rows);
    std::cout << table;
    std::string out = cfg.get("out");
    fs::create_directories(out);
    {
        std::ofstream rf(out + "/report.txt");
        rf << table;
        std::ofstream mf(out + "/metrics.tsv");
        char buf[160];
        std::snprintf(buf, sizeof(buf), "f1_micro\tf1_macro\tf1_avg\thits_at_1\n%.17g\t%.17g\t%.17g\t%.17g\n",
                      100.0 * metrics.f1_micro, 100.0 * metrics.f1_macro, 100.0 * metrics.f1_avg,
                      100.0 * metrics.hits_at_1);
        mf << buf;
    }
    emit_effective(cfg, out);
    return 0;
}

int cmd_predict(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, true, true);
    int split = split_index(cfg);
    if (ws.subgraphs[split].empty())
        throw DataError("no subgraphs for split '" + std::string(kSplits[split]) + "' in " + data_dir(cfg));
    model::Model m = load_model_dir(cfg, ws.graph);
    auto instances = compile_split(ws, split, m);
    double threshold = resolve_threshold(cfg);
    auto probs = train::predict_split(m, instances, cfg.get_int("threads"));

    std::string out = cfg.get("out");
    fs::create_directories(out);
    std::ofstream pf(out + "/predictions.tsv");
    if (!pf) throw DataError("cannot open file for writing: " + out + "/predictions.tsv");
    char buf[64];
    for (size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        std::vector<size_t> order(inst.node_entities.size());
        for (size_t k = 0; k < order.size(); ++k) order[k] = k;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (probs[i][a] != probs[i][b]) return probs[i][a] > probs[i][b];
            return inst.node_entities[a] < inst.node_entities[b];
        });
        for (size_t k : order) {
            std::snprintf(buf, sizeof(buf), "%.17g", probs[i][k]);
            pf << inst.qid << '\t' << ws.graph.entity_name(inst.node_entities[k]) << '\t' << buf << '\n';
        }
        pf << inst.qid << "\tanswers\t";
        bool first = true;
        for (size_t k = 0; k < inst.node_entities.size(); ++k) {
            if (probs[i][k] >= threshold) {
                if (!first) pf << ',';
                pf << ws.graph.entity_name(inst.node_entities[k]);
                first = false;
            }
        }
        pf << '\n';
    }
    emit_effective(cfg, out);
    return 0;
}

int cmd_ablate(const RunConfig& cfg) {
    Workspace ws = load_workspace(cfg, true, true);
    for (int s = 0; s < 3; ++s) {
        if (ws.subgraphs[s].empty())
            throw DataError("ablate requires subgraphs for all three splits in " + data_dir(cfg));
    }
    std::string dir = data_dir(cfg);
    encoders::TranseTables transe = load_transe(dir);
    require_file(dir + "/word_vectors.txt");
    encoders::EmbeddingTable words = encoders::load_embeddings(dir + "/word_vectors.txt");

    model::ModelConfig mc = cfg.model_config();
    train::TrainConfig tc = cfg.train_config();
    RngStream compile_rng(tc.seed, 7);
    model::Model probe = model::build_model(mc, ws.graph, transe, words, compile_rng);
    auto train_split = compile_split(ws, 0, probe);
    auto val_split = compile_split(ws, 1, probe);
    auto test_split = compile_split(ws, 2, probe);

    train::AblationInputs inputs;
    inputs.graph = &ws.graph;
    inputs.transe = &transe;
    inputs.words = &words;
    inputs.train_split = train_split;
    inputs.val_split = val_split;
    inputs.test_split = test_split;

    auto rows = train::ablate(inputs, mc, tc, cfg.get_int("ablate.seeds"));
    std::string table = train::format_metrics_table(rows);
    std::cout << table;

    std::string out = cfg.get("out");
    fs::create_directories(out);
    {
        std::ofstream tf(out + "/ablation.txt");
        tf << table;
        std::ofstream mf(out + "/ablation.tsv");
        mf << "masked_component\tf1_micro\tf1_macro\tf1_avg\thits_at_1\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%.17g\t%.17g\t%.17g\t%.17g\n", 100.0 * r.metrics.f1_micro,
                          100.0 * r.metrics.f1_macro, 100.0 * r.metrics.f1_avg,
                          100.0 * r.metrics.hits_at_1);
            mf << r.name << '\t' << buf;
        }
    }
    emit_effective(cfg, out);
    return 0;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    try {
        if (args.empty()) throw UsageError("no command given");
        const std::string& command = args[0];

        RunConfig cfg;
        if (const char* env = std::getenv("RELGRAPH_THREADS")) cfg.set("threads", env);

        // config file first, then flag overrides in order
        for (size_t i = 1; i + 1 < args.size(); i += 2) {
            if (args[i] == "--config") cfg.load_file(args[i + 1]);
        }
        for (size_t i = 1; i < args.size(); i += 2) {
            const std::string& flag = args[i];
            if (i + 1 >= args.size()) throw UsageError("flag " + flag + " expects a value");
            const std::string& value = args[i + 1];
            if (flag == "--config") continue;
            else if (flag == "--seed") cfg.set("seed", value);
            else if (flag == "--out") cfg.set("out", value);
            else if (flag == "--data") cfg.set("data", value);
            else if (flag == "--model") cfg.set("model_dir", value);
            else if (flag == "--split") cfg.set("split", value);
            else if (flag == "--threads") cfg.set("threads", value);
            else if (flag == "--noise") cfg.set("link.noise", value);
            else if (flag == "--threshold") cfg.set("eval.threshold", value);
            else if (flag == "--budget") cfg.set("retrieval.budget", value);
            else if (flag == "--seeds") cfg.set("ablate.seeds", value);
            else if (flag == "--set") {
                auto eq = value.find('=');
                if (eq == std::string::npos) throw UsageError("--set expects key=value");
                cfg.set(value.substr(0, eq), value.substr(eq + 1));
            } else {
                throw UsageError("unknown flag: " + flag);
            }
        }
        if (cfg.get_int("threads") < 1) throw UsageError("--threads must be at least 1");

        if (command == "gen") return cmd_gen(cfg);
        if (command == "pretrain") return cmd_pretrain(cfg);
        if (command == "link") return cmd_link(cfg);
        if (command == "subgraph") return cmd_subgraph(cfg);
        if (command == "train") return cmd_train(cfg);
        if (command == "eval") return cmd_eval(cfg);
        if (command == "ablate") return cmd_ablate(cfg);
        if (command == "predict") return cmd_predict(cfg);
        throw UsageError("unknown command: " + command);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n\n%s", e.what(), kUsage);
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

int dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args);
}

}  // namespace relgraph::cli
