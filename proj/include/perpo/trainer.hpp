#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "perpo/objectives.hpp"
#include "perpo/pipeline.hpp"
#include "perpo/policy.hpp"
#include "perpo/tasks.hpp"

namespace perpo::trainer {

using objectives::Method;

struct TrainConfig {
    Method method = Method::PERPO;
    double beta = 0.1;
    double gamma = 0.5;
    double learning_rate = 0.05;
    int steps = 500;
    int batch_size = 8;
    std::uint64_t seed = 0;
    std::string dataset_path;
    int eval_every = 0;          // 0 disables periodic evaluation
    bool ablate_prompt = false;  // zero prompt features during training

    /// Flat key=value file; '#' starts a comment. Unknown keys throw.
    static TrainConfig from_file(const std::string& path);
    void apply_line(const std::string& key, const std::string& value);
    void validate() const;  // throws std::invalid_argument on bad values
};

/// Evaluation metrics keyed by name (ordered, so serialization is stable).
/// Grounding: ap50, mean_iou. OCR: mean_edit_dist, mean_ocr_reward,
/// precision, recall, f1, bleu.
struct EvalMetrics {
    tasks::TaskKind kind = tasks::TaskKind::Grounding;
    std::map<std::string, double> values;

    double headline() const;  // ap50 or mean_ocr_reward
};

struct TrainReport {
    std::vector<double> loss_trace;                 // batch loss per step, pre-update
    std::vector<std::pair<int, EvalMetrics>> evals; // (step, metrics)
    policy::PolicyParams final_params;
    double wall_seconds = 0.0;
    int skipped_tied_records = 0;
};

/// Ground-truth cross-entropy training: minimizes -log pi(truth | prompt)
/// by plain gradient descent over seeded shuffled batches.
TrainReport train_sft(const TrainConfig& config, const tasks::TaskSet& train_set,
                      const policy::PolicyParams& init,
                      const tasks::TaskSet* eval_set = nullptr);

/// Preference training for DPO / LIPO / PERPO. The reference snapshot is
/// taken from `init` at step 0 and reference log-probabilities are computed
/// from it; DPO consumes each record through its extracted extreme pair.
/// Records with all-tied rewards are skipped and counted.
TrainReport train_preference(const TrainConfig& config,
                             const pipeline::PreferenceDataset& dataset,
                             const tasks::TaskSet& task_set,
                             const policy::PolicyParams& init,
                             const tasks::TaskSet* eval_set = nullptr);

/// Greedy-decodes every instance and aggregates the task's metrics.
EvalMetrics evaluate(const policy::PolicyParams& params, const tasks::TaskSet& eval_set);

struct BonRow {
    int n = 0;
    double mean_best_reward = 0.0;
    /// Fraction of instances whose best reward is at least 0.5. Equals
    /// AP@50 of the selected responses on grounding tasks.
    double ap50_of_best = 0.0;
};

/// Best-of-N sweep. Larger N reuses the smaller N's rollouts as a prefix,
/// so mean best reward is non-decreasing in N by construction.
std::vector<BonRow> bon_sweep(const policy::PolicyParams& params,
                              const tasks::TaskSet& eval_set,
                              const std::vector<int>& n_values,
                              const policy::GenerationConfig& gen);

struct CompareRow {
    std::string method;
    int n = 0;
    std::uint64_t seed = 0;
    EvalMetrics metrics;
};

struct CompareConfig {
    std::vector<Method> methods{Method::SFT, Method::DPO, Method::PERPO};
    std::vector<int> n_values{2, 4, 8};
    std::vector<std::uint64_t> seeds;
    // Task profile
    tasks::TaskKind task_kind = tasks::TaskKind::Grounding;
    int grid_size = 8;
    int train_count = 300;
    int eval_count = 200;
    int alphabet_size = 6;
    int ocr_length = 6;
    double ocr_noise = 0.25;
    // Stage hyperparameters
    double temperature = 0.5;
    double margin_threshold = 0.25;
    TrainConfig sft;
    TrainConfig pref;
    // When artifacts_dir is set, intermediate files (task sets, the SFT
    // policy, preference datasets) live there: built and written when
    // build is true, required to exist when build is false.
    std::string artifacts_dir;
    bool build = true;
};

struct CompareResult {
    std::vector<CompareRow> rows;  // |methods| x |n_values| x |seeds|
    std::vector<std::string> summary_lines;
};

/// Runs every (method, N, seed) cell with matched seeds: per seed it
/// generates tasks, trains the SFT baseline, builds one preference dataset
/// per N from the SFT policy, then preference-trains each method from it.
CompareResult compare_methods(const CompareConfig& config);

/// Writes the trace CSV: step, loss, then metric columns filled on
/// evaluation steps.
void write_trace_csv(const TrainReport& report, tasks::TaskKind kind,
                     const std::string& path);

}  // namespace perpo::trainer
