#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relgraph/model.hpp"

namespace relgraph::train {

struct TrainConfig {
    int64_t max_epochs = 100;
    int64_t batch_size = 10;
    double lr = 0.001;
    double lr_decay = 0.8;
    int64_t lr_period = 10;
    int64_t patience = 10;
    double clip_norm = 5.0;
    // threshold used for the per-epoch validation metric; the reported
    // threshold is tuned on validation after training
    double monitor_threshold = 0.5;
    uint64_t seed = 42;
    int64_t threads = 1;
};

// All values in [0,1]; conventionally reported x100.
struct Metrics {
    double f1_micro = 0.0;
    double f1_macro = 0.0;
    double f1_avg = 0.0;
    double hits_at_1 = 0.0;
};

struct EpochLog {
    int64_t epoch;
    double lr;
    double train_loss;
    double val_f1avg;
};

struct TrainResult {
    std::vector<EpochLog> log;
    int64_t best_epoch = -1;
    double best_val_f1avg = 0.0;
};

// One question's evaluation inputs.
struct QuestionEval {
    std::vector<int64_t> nodes;      // ascending entity ids
    std::vector<double> labels;      // aligned with nodes
    std::vector<double> probs;       // aligned with nodes
    std::vector<int64_t> answers;    // gold entity ids, may be empty
};

double bce_loss_probs(std::span<const double> probs, std::span<const double> labels);

// Set-F1 with the empty-set conventions: both empty -> 1, exactly one
// empty -> 0.
double set_f1(const std::vector<int64_t>& predicted, const std::vector<int64_t>& gold);

Metrics compute_metrics(std::span<const QuestionEval> evals, double threshold);

// Grid {0.05, 0.10, ..., 0.95} maximizing F1_avg; ties to the lower
// threshold.
double tune_threshold(std::span<const QuestionEval> evals);

// Evaluation-mode probabilities for every instance, in order. threads
// splits the questions across workers; outputs do not depend on it.
std::vector<std::vector<double>> predict_split(model::Model& m,
                                               std::span<const model::CompiledInstance> instances,
                                               int64_t threads = 1);

std::vector<QuestionEval> make_evals(std::span<const model::CompiledInstance> instances,
                                     const std::vector<std::vector<double>>& probs);

Metrics evaluate(model::Model& m, std::span<const model::CompiledInstance> instances,
                 double threshold, int64_t threads = 1);

// Adam with the decayed schedule, batched question gradients, early
// stopping on validation F1_avg, best-epoch parameter restore. The
// returned log has one entry per executed epoch.
TrainResult train(model::Model& m, std::span<const model::CompiledInstance> train_split,
                  std::span<const model::CompiledInstance> val_split, const TrainConfig& config);

void write_train_log(const TrainResult& result, const std::string& path);

struct AblationRow {
    std::string name;
    Metrics metrics;
};

struct AblationInputs {
    const kg::KnowledgeGraph* graph = nullptr;
    const encoders::TranseTables* transe = nullptr;
    const encoders::EmbeddingTable* words = nullptr;
    std::span<const model::CompiledInstance> train_split;  // compiled against a throwaway model
    std::span<const model::CompiledInstance> val_split;
    std::span<const model::CompiledInstance> test_split;
};

// Trains and evaluates the four masked configurations of the ablation
// study, averaging test metrics over `seeds` runs per row.
std::vector<AblationRow> ablate(const AblationInputs& inputs, const model::ModelConfig& base_config,
                                const TrainConfig& base_train, int64_t seeds);

// Aligned text table, rows in the ablation's order, columns
// F1_micro / F1_macro / F1_avg / Hits@1, values x100.
std::string format_metrics_table(std::span<const AblationRow> rows);

}  // namespace relgraph::train
