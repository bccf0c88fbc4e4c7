#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "perpo/metrics.hpp"

namespace perpo::objectives {

enum class Method { SFT, DPO, LIPO, PERPO };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Per-response inputs to the listwise losses: policy and reference
/// log-probabilities plus discriminative rewards, all parallel, n >= 2.
struct ScoredList {
    std::vector<double> policy_logprobs;
    std::vector<double> ref_logprobs;
    std::vector<metrics::RewardValue> disc_rewards;

    std::size_t size() const { return policy_logprobs.size(); }
    void validate() const;  // throws std::invalid_argument on shape violations
};

struct ObjectiveConfig {
    double beta = 0.1;
    double gamma = 0.5;
    Method method = Method::PERPO;
};

struct ObjectiveOutput {
    double loss = 0.0;
    std::vector<double> grad_policy_logprobs;  // dL/d log pi_theta(y_i|x)
};

/// Numerically stable log(sigmoid(z)) and sigmoid(z).
double log_sigmoid(double z);
double sigmoid(double z);

/// Implicit per-response scores R_i = policy_logprob_i - ref_logprob_i.
/// beta is applied inside the losses, not here.
std::vector<double> implicit_scores(const ScoredList& s);

/// Descending dense ranks of the rewards; ties share a rank (0 = best).
std::vector<int> ranking_levels(std::span<const metrics::RewardValue> rewards);

using PairKey = std::pair<std::size_t, std::size_t>;

/// Normalized margin weights over strict reward pairs:
///   w_ij = (r_i - r_j)^gamma / sum over strict pairs of (r_i - r_j)^gamma.
/// Tied pairs are excluded; a fully tied list throws.
std::map<PairKey, double> margin_weights(std::span<const metrics::RewardValue> rewards,
                                         double gamma);

/// Pairwise logistic loss on the single preference pair of a 2-list:
///   -log sigmoid(beta (R+ - R-)), preferred response by higher reward.
ObjectiveOutput dpo_loss(const ScoredList& s, const ObjectiveConfig& config);

/// Listwise loss with unit pair weights:
///   -sum over strict pairs of log sigmoid(beta (R_i - R_j)).
ObjectiveOutput lipo_loss(const ScoredList& s, const ObjectiveConfig& config);

/// Margin-weighted listwise loss:
///   -sum over strict pairs of w_ij log sigmoid(beta (R_i - R_j)),
/// with w from margin_weights(rewards, gamma).
ObjectiveOutput perpo_loss(const ScoredList& s, const ObjectiveConfig& config);

/// Hook for alternative pair weighting schemes. Receives the strict pair
/// (i, j) and the list; returns that pair's weight. The shipped losses are
/// the gamma-power margin weights and the unit weights; other schemes can
/// be plugged in without touching the loss code.
using PairWeightFn =
    std::function<double(std::size_t i, std::size_t j, const ScoredList& s)>;

/// Generic listwise pairwise-logistic loss with caller-supplied weights.
ObjectiveOutput weighted_list_loss(const ScoredList& s, double beta,
                                   const PairWeightFn& weight);

/// The rearranged gamma = 1 objective: -sum_i phi(R_i) r_i divided by the
/// total reward margin, where
///   phi(R_i) = sum_{r_i > r_m} log sigmoid(beta (R_i - R_m))
///            - sum_{r_i < r_n} log sigmoid(beta (R_n - R_i)).
/// Equals perpo_loss at gamma = 1 exactly.
double perpo_erm_value(const ScoredList& s, const ObjectiveConfig& config);

/// Dispatch on config.method (DPO requires n = 2; SFT is not a list loss
/// and throws).
ObjectiveOutput evaluate_list(const ScoredList& s, const ObjectiveConfig& config);

/// Central finite differences of the configured loss against the analytic
/// gradient; returns the max relative error with denominator
/// max(1, |analytic|, |numeric|).
double finite_difference_check(const ScoredList& s, const ObjectiveConfig& config,
                               double h);

}  // namespace perpo::objectives
