#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "perpo/policy.hpp"
#include "perpo/tasks.hpp"

namespace perpo::pipeline {

using metrics::RewardValue;
using metrics::TokenSequence;

/// One prompt's listwise training unit: distinct sampled responses with
/// their rewards and the reference log-probabilities recorded at build time.
struct PreferenceRecord {
    int instance_id = 0;
    std::vector<TokenSequence> responses;
    std::vector<RewardValue> rewards;       // rounded to 6 decimals (storage precision)
    std::vector<double> ref_logprobs;       // rounded to 9 decimals
};

enum class RejectReason { TooFewDistinct, AllTied, MarginBelowThreshold };

std::string reject_reason_name(RejectReason r);

/// build_record outcome: a record or a typed rejection, never an error.
struct BuildResult {
    std::optional<PreferenceRecord> record;
    std::optional<RejectReason> rejection;

    bool accepted() const { return record.has_value(); }
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    double temperature = 0.5;
    int list_size = 0;  // N rollouts per prompt
    double margin_threshold = 0.0;
    tasks::TaskKind task_kind = tasks::TaskKind::Grounding;
    std::string tasks_path;
    tasks::TaskParams task_params;
    int instances_total = 0;
    int accepted = 0;
    std::map<std::string, int> rejected;  // reason name -> count
    long candidates_total = 0;            // before deduplication
    long candidates_distinct = 0;         // after deduplication
};

struct PreferenceDataset {
    DatasetManifest manifest;
    std::vector<PreferenceRecord> records;
};

/// N rollouts with per-rollout seeds derived from gen.seed. Deterministic
/// for a fixed (seed, policy). N must be at least 2.
std::vector<TokenSequence> sample_candidates(const policy::PolicyParams& params,
                                             const tasks::TaskInstance& inst, int n,
                                             const policy::GenerationConfig& gen);

/// Scores candidates, removes exact duplicates, and accepts when at least
/// two distinct responses remain, the rewards are not all tied, and the
/// list margin reaches the threshold.
BuildResult build_record(const tasks::TaskInstance& inst,
                         const std::vector<TokenSequence>& candidates,
                         const policy::PolicyParams& ref_policy,
                         double margin_threshold);

/// Argmax of reward; ties break to the lowest index.
std::size_t best_of_n(std::span<const RewardValue> rewards);

/// (winner, loser): the maximum- and minimum-reward responses, ties broken
/// by lowest index. The pair's reward gap equals the record's list margin.
std::pair<std::size_t, std::size_t> dpo_pair(const PreferenceRecord& record);

struct BuildOptions {
    int n = 20;
    double temperature = 0.5;
    double margin_threshold = 0.8;
    std::uint64_t seed = 0;
    std::string tasks_path;  // recorded in the manifest
};

/// Full construction pass over a task set: sample, score, filter, collect.
PreferenceDataset build_dataset(const tasks::TaskSet& task_set,
                                const policy::PolicyParams& sampling_policy,
                                const BuildOptions& options);

/// Line-delimited dataset file: manifest line then one record per line.
/// Reading validates every record invariant and names the violated one.
void write_dataset(const PreferenceDataset& dataset, const std::string& path);
PreferenceDataset read_dataset(const std::string& path);

}  // namespace perpo::pipeline
