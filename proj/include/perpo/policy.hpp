#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "perpo/metrics.hpp"

namespace perpo::policy {

using metrics::TokenSequence;

/// Linear-softmax autoregressive token policy. The per-step feature vector
/// is the prompt feature vector concatenated with a one-hot of the previous
/// token; a dedicated start symbol fills the previous-token slot at t = 0.
/// Logits are W * features, so
///   feature_dim = prompt_dim + vocab_size + 1.
struct PolicyParams {
    int vocab_size = 0;
    int feature_dim = 0;
    int max_seq_len = 0;
    std::vector<double> weights;  // vocab_size rows x feature_dim cols, row-major

    int prompt_dim() const { return feature_dim - vocab_size - 1; }
    int start_column() const { return feature_dim - 1; }

    double at(int v, int f) const { return weights[static_cast<std::size_t>(v) * feature_dim + f]; }
    double& at(int v, int f) { return weights[static_cast<std::size_t>(v) * feature_dim + f]; }

    static PolicyParams zeros(int vocab_size, int prompt_dim, int max_seq_len);
    void validate() const;  // finite entries, consistent dimensions
};

/// Frozen copy of the policy taken before preference training.
class ReferenceSnapshot {
public:
    explicit ReferenceSnapshot(const PolicyParams& p) : params_(p) {}
    const PolicyParams& params() const { return params_; }

private:
    const PolicyParams params_;
};

struct GenerationConfig {
    double temperature = 0.5;  // 0 means greedy argmax
    int max_length = 0;
    std::uint64_t seed = 0;
};

/// Exact log pi(y | prompt): the sum of per-step log-softmax terms.
double sequence_logprob(const PolicyParams& params, std::span<const double> prompt_features,
                        const TokenSequence& y);

/// Autoregressive sampling from softmax(logits / temperature). Temperature 0
/// decodes greedily with lowest-index tie-break. Identical seeds give
/// identical sequences.
TokenSequence sample_sequence(const PolicyParams& params,
                              std::span<const double> prompt_features,
                              const GenerationConfig& gen);

/// d log pi(y | prompt) / dW, same shape as the weight matrix:
/// per step, (one_hot(y_t) - softmax(logits)) outer the step features.
std::vector<double> logprob_param_gradient(const PolicyParams& params,
                                           std::span<const double> prompt_features,
                                           const TokenSequence& y);

ReferenceSnapshot snapshot_reference(const PolicyParams& params);

/// Next-token distribution after the given prefix, at the given temperature.
std::vector<double> next_token_distribution(const PolicyParams& params,
                                            std::span<const double> prompt_features,
                                            std::span<const int> prefix,
                                            double temperature);

/// Text serialization: a header line with dimensions, then one row of
/// weights per line. Values are printed so the round-trip is exact.
void save_policy(const PolicyParams& params, const std::string& path);
PolicyParams load_policy(const std::string& path);

}  // namespace perpo::policy
