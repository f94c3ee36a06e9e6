#include "relgraph/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "relgraph/errors.hpp"
#include "relgraph/ops.hpp"
#include "relgraph/optim.hpp"

namespace relgraph::train {

double bce_loss_probs(std::span<const double> probs, std::span<const double> labels) {
    return bce_loss(probs, labels);
}

double set_f1(const std::vector<int64_t>& predicted, const std::vector<int64_t>& gold) {
    if (predicted.empty() && gold.empty()) return 1.0;
    if (predicted.empty() || gold.empty()) return 0.0;
    std::set<int64_t> gold_set(gold.begin(), gold.end());
    int64_t tp = 0;
    for (int64_t p : predicted)
        if (gold_set.contains(p)) ++tp;
    double precision = static_cast<double>(tp) / static_cast<double>(predicted.size());
    double recall = static_cast<double>(tp) / static_cast<double>(gold_set.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

namespace {

double class_f1(int64_t tp, int64_t fp, int64_t fn) {
    if (tp == 0 && fp == 0 && fn == 0) return 1.0;  // nothing to find, nothing claimed
    double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

}  // namespace

Metrics compute_metrics(std::span<const QuestionEval> evals, double threshold) {
    Metrics m;
    if (evals.empty()) return m;
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double f1_sum = 0.0;
    int64_t hits = 0;
    for (const QuestionEval& q : evals) {
        std::vector<int64_t> predicted;
        for (size_t i = 0; i < q.nodes.size(); ++i) {
            bool pred = q.probs[i] >= threshold;
            bool actual = q.labels[i] != 0.0;
            if (pred) predicted.push_back(q.nodes[i]);
            if (pred && actual) ++tp;
            else if (pred && !actual) ++fp;
            else if (!pred && actual) ++fn;
            else ++tn;
        }
        f1_sum += set_f1(predicted, q.answers);
        // top-scoring node, ties to the smallest entity id
        if (!q.nodes.empty()) {
            size_t best = 0;
            for (size_t i = 1; i < q.nodes.size(); ++i)
                if (q.probs[i] > q.probs[best]) best = i;
            if (std::find(q.answers.begin(), q.answers.end(), q.nodes[best]) != q.answers.end()) ++hits;
        }
    }
    m.f1_micro = class_f1(tp, fp, fn);
    m.f1_macro = 0.5 * (class_f1(tp, fp, fn) + class_f1(tn, fn, fp));
    m.f1_avg = f1_sum / static_cast<double>(evals.size());
    m.hits_at_1 = static_cast<double>(hits) / static_cast<double>(evals.size());
    return m;
}

double tune_threshold(std::span<const QuestionEval> evals) {
    double best_threshold = 1.0 / 20.0;
    double best_f1 = -1.0;
    for (int k = 1; k <= 19; ++k) {
        double threshold = static_cast<double>(k) / 20.0;
        double f1 = compute_metrics(evals, threshold).f1_avg;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_threshold = threshold;
        }
    }
    return best_threshold;
}

std::vector<std::vector<double>> predict_split(model::Model& m,
                                               std::span<const model::CompiledInstance> instances,
                                               int64_t threads) {
    std::vector<std::vector<double>> probs(instances.size());
    constexpr size_t kChunk = 10;  // instances per shared tape
    std::vector<size_t> chunk_starts;
    for (size_t i = 0; i < instances.size(); i += kChunk) chunk_starts.push_back(i);

    auto run_chunk = [&](size_t start) {
        Tape tape;
        model::BatchCache cache = model::make_batch_cache(tape, m);
        model::ForwardOptions options;
        options.training = false;
        size_t end = std::min(start + kChunk, instances.size());
        for (size_t i = start; i < end; ++i) {
            model::ForwardResult r = model::forward(tape, instances[i], m, cache, options);
            auto span = tape.value(r.probs);
            probs[i].assign(span.begin(), span.end());
        }
    };

    if (threads <= 1 || chunk_starts.size() <= 1) {
        for (size_t s : chunk_starts) run_chunk(s);
    } else {
        size_t n_workers = std::min<size_t>(static_cast<size_t>(threads), chunk_starts.size());
        std::vector<std::thread> workers;
        std::atomic<size_t> next{0};
        for (size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&]() {
                while (true) {
                    size_t i = next.fetch_add(1);
                    if (i >= chunk_starts.size()) return;
                    run_chunk(chunk_starts[i]);
                }
            });
        }
        for (auto& t : workers) t.join();
    }
    return probs;
}

std::vector<QuestionEval> make_evals(std::span<const model::CompiledInstance> instances,
                                     const std::vector<std::vector<double>>& probs) {
    std::vector<QuestionEval> evals(instances.size());
    for (size_t i = 0; i < instances.size(); ++i) {
        evals[i].nodes = instances[i].node_entities;
        evals[i].labels = instances[i].labels;
        evals[i].probs = probs[i];
        evals[i].answers = instances[i].answers;
    }
    return evals;
}

Metrics evaluate(model::Model& m, std::span<const model::CompiledInstance> instances,
                 double threshold, int64_t threads) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("evaluate: threshold must lie in (0,1)");
    auto probs = predict_split(m, instances, threads);
    auto evals = make_evals(instances, probs);
    return compute_metrics(evals, threshold);
}

TrainResult train(model::Model& m, std::span<const model::CompiledInstance> train_split,
                  std::span<const model::CompiledInstance> val_split, const TrainConfig& config) {
    if (train_split.empty() || val_split.empty())
        throw DataError("train: empty train or validation split");
    if (config.batch_size < 1) throw DataError("train: batch size must be at least 1");
    if (config.patience < 1) throw DataError("train: patience must be at least 1");

    TrainResult result;
    AdamState adam_state;
    AdamConfig adam;
    RngStream order_rng(config.seed, 101);

    std::vector<Tensor> best_params;
    std::vector<BatchNormBuffers> best_bn;
    double best_val = -1.0;
    int64_t since_best = 0;

    std::vector<size_t> order(train_split.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    Tape tape;
    for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        double lr = lr_at(epoch, config.lr, config.lr_decay, config.lr_period);
        adam.lr = lr;
        order_rng.shuffle(order);

        double loss_sum = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch_size)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            tape.reset();
            model::BatchCache cache = model::make_batch_cache(tape, m);
            std::vector<Var> losses;
            for (size_t k = start; k < end; ++k) {
                const model::CompiledInstance& inst = train_split[order[k]];
                RngStream dropout_rng(config.seed,
                                      0x9E3779B9ULL + static_cast<uint64_t>(epoch) * 1000003ULL +
                                          static_cast<uint64_t>(order[k]));
                model::ForwardOptions options;
                options.training = true;
                options.dropout_rng = &dropout_rng;
                model::ForwardResult fw = model::forward(tape, inst, m, cache, options);
                losses.push_back(tape.bce_mean(fw.probs, inst.labels));
            }
            Var batch_loss = tape.scale(tape.add(losses), 1.0 / static_cast<double>(losses.size()));
            double loss_value = tape.value_scalar(batch_loss);
            if (!std::isfinite(loss_value))
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ": non-finite loss");
            loss_sum += loss_value * static_cast<double>(losses.size());

            tape.backward(batch_loss);
            std::vector<Tensor> grads;
            grads.reserve(m.params.size());
            for (size_t i = 0; i < m.params.size(); ++i) grads.push_back(tape.grad_tensor(cache.bound[i]));
            clip_global_norm(grads, config.clip_norm);
            adam_step(m.params.tensors(), grads, adam_state, adam);
        }
        double train_loss = loss_sum / static_cast<double>(train_split.size());

        double val_f1 = evaluate(m, val_split, config.monitor_threshold, 1).f1_avg;
        result.log.push_back({epoch, lr, train_loss, val_f1});

        if (val_f1 > best_val) {
            best_val = val_f1;
            result.best_epoch = epoch;
            result.best_val_f1avg = val_f1;
            best_params = m.params.tensors();
            best_bn = m.bn;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= config.patience) break;
        }
    }

    if (!best_params.empty()) {
        m.params.tensors() = best_params;
        m.bn = best_bn;
    }
    return result;
}

void write_train_log(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    char buf[96];
    for (const EpochLog& e : result.log) {
        std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g\n", static_cast<long long>(e.epoch),
                      e.lr, e.train_loss, e.val_f1avg);
        out << buf;
    }
}

std::vector<AblationRow> ablate(const AblationInputs& inputs, const model::ModelConfig& base_config,
                                const TrainConfig& base_train, int64_t seeds) {
    if (seeds < 1) throw DataError("ablate: need at least one seed");
    struct RowSpec {
        const char* name;
        void (*mask)(model::ModelConfig&);
    };
    const RowSpec specs[4] = {
        {"Document Relations", [](model::ModelConfig& c) { c.use_doc_relations = false; }},
        {"Bi-Directional Attention", [](model::ModelConfig& c) { c.use_bidir_attention = false; }},
        {"Graph Coarsening", [](model::ModelConfig& c) { c.use_coarsening = false; }},
        {"No Mask", [](model::ModelConfig&) {}},
    };

    std::vector<AblationRow> rows;
    for (const RowSpec& spec : specs) {
        Metrics sum;
        for (int64_t s = 0; s < seeds; ++s) {
            model::ModelConfig mc = base_config;
            spec.mask(mc);
            TrainConfig tc = base_train;
            tc.seed = base_train.seed + static_cast<uint64_t>(s);
            RngStream init_rng(tc.seed, 7);
            model::Model m = model::build_model(mc, *inputs.graph, *inputs.transe, *inputs.words, init_rng);
            train(m, inputs.train_split, inputs.val_split, tc);
            auto val_probs = predict_split(m, inputs.val_split, base_train.threads);
            auto val_evals = make_evals(inputs.val_split, val_probs);
            double threshold = tune_threshold(val_evals);
            Metrics metrics = evaluate(m, inputs.test_split, threshold, base_train.threads);
            sum.f1_micro += metrics.f1_micro;
            sum.f1_macro += metrics.f1_macro;
            sum.f1_avg += metrics.f1_avg;
            sum.hits_at_1 += metrics.hits_at_1;
        }
        double inv = 1.0 / static_cast<double>(seeds);
        rows.push_back({spec.name, {sum.f1_micro * inv, sum.f1_macro * inv, sum.f1_avg * inv,
                                    sum.hits_at_1 * inv}});
    }
    return rows;
}

std::string format_metrics_table(std::span<const AblationRow> rows) {
    size_t name_width = std::string("Masked Component").size();
    for (const AblationRow& r : rows) name_width = std::max(name_width, r.name.size());
    std::ostringstream os;
    char buf[64];
    os << "Masked Component" << std::string(name_width - 16, ' ')
       << "  F1_micro  F1_macro  F1_avg  Hits@1\n";
    for (const AblationRow& r : rows) {
        os << r.name << std::string(name_width - r.name.size(), ' ');
        std::snprintf(buf, sizeof(buf), "  %8.1f  %8.1f  %6.1f  %6.1f\n", 100.0 * r.metrics.f1_micro,
                      100.0 * r.metrics.f1_macro, 100.0 * r.metrics.f1_avg, 100.0 * r.metrics.hits_at_1);
        os << buf;
    }
    return os.str();
}

}  // namespace relgraph::train
