#include "perpo/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace perpo::objectives {

std::string method_name(Method m) {
    switch (m) {
        case Method::SFT: return "sft";
        case Method::DPO: return "dpo";
        case Method::LIPO: return "lipo";
        case Method::PERPO: return "perpo";
    }
    throw std::invalid_argument("method_name: unknown method");
}

Method method_from_name(const std::string& s) {
    if (s == "sft") return Method::SFT;
    if (s == "dpo") return Method::DPO;
    if (s == "lipo") return Method::LIPO;
    if (s == "perpo") return Method::PERPO;
    throw std::invalid_argument("method_from_name: unknown method '" + s + "'");
}

void ScoredList::validate() const {
    if (policy_logprobs.size() != ref_logprobs.size() ||
        policy_logprobs.size() != disc_rewards.size())
        throw std::invalid_argument("ScoredList: mismatched parallel lengths");
    if (policy_logprobs.size() < 2)
        throw std::invalid_argument("ScoredList: need at least 2 responses");
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

double log_sigmoid(double z) {
    // log sigma(z) = -softplus(-z), softplus(x) = max(x, 0) + log1p(exp(-|x|)).
    double x = -z;
    return -(std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))));
}

std::vector<double> implicit_scores(const ScoredList& s) {
    s.validate();
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = s.policy_logprobs[i] - s.ref_logprobs[i];
    return out;
}

std::vector<int> ranking_levels(std::span<const metrics::RewardValue> rewards) {
    std::vector<double> uniq;
    uniq.reserve(rewards.size());
    for (const auto& r : rewards) uniq.push_back(r.value);
    std::sort(uniq.begin(), uniq.end(), std::greater<double>());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<int> levels(rewards.size());
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        auto it = std::lower_bound(uniq.begin(), uniq.end(), rewards[i].value,
                                   std::greater<double>());
        levels[i] = static_cast<int>(it - uniq.begin());
    }
    return levels;
}

std::map<PairKey, double> margin_weights(std::span<const metrics::RewardValue> rewards,
                                         double gamma) {
    if (rewards.size() < 2)
        throw std::invalid_argument("margin_weights: need at least 2 rewards");
    std::map<PairKey, double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        for (std::size_t j = 0; j < rewards.size(); ++j) {
            if (rewards[i].value > rewards[j].value) {
                double d = std::pow(rewards[i].value - rewards[j].value, gamma);
                w[{i, j}] = d;
                total += d;
            }
        }
    }
    if (w.empty())
        throw std::invalid_argument("margin_weights: all rewards tied");
    for (auto& [key, v] : w) v /= total;
    return w;
}

namespace {

// Shared core of all the list losses: the weighted sum over strict pairs of
// -log sigma(beta (R_i - R_j)) with the exact gradient in logprob space.
ObjectiveOutput pair_weighted_loss(const ScoredList& s, double beta,
                                   const std::map<PairKey, double>& weights) {
    std::vector<double> r = implicit_scores(s);
    ObjectiveOutput out;
    out.grad_policy_logprobs.assign(r.size(), 0.0);
    for (const auto& [key, w] : weights) {
        auto [i, j] = key;
        double z = beta * (r[i] - r[j]);
        out.loss -= w * log_sigmoid(z);
        double g = beta * w * sigmoid(-z);
        out.grad_policy_logprobs[i] -= g;
        out.grad_policy_logprobs[j] += g;
    }
    return out;
}

}  // namespace

ObjectiveOutput dpo_loss(const ScoredList& s, const ObjectiveConfig& config) {
    s.validate();
    if (s.size() != 2)
        throw std::invalid_argument("dpo_loss: list size must be 2");
    double r0 = s.disc_rewards[0].value, r1 = s.disc_rewards[1].value;
    if (r0 == r1)
        throw std::invalid_argument("dpo_loss: tied rewards");
    std::map<PairKey, double> w;
    if (r0 > r1) {
        w[{0, 1}] = 1.0;
    } else {
        w[{1, 0}] = 1.0;
    }
    return pair_weighted_loss(s, config.beta, w);
}

ObjectiveOutput lipo_loss(const ScoredList& s, const ObjectiveConfig& config) {
    s.validate();
    std::map<PairKey, double> w;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s.disc_rewards[i].value > s.disc_rewards[j].value) w[{i, j}] = 1.0;
    if (w.empty())
        throw std::invalid_argument("lipo_loss: all rewards tied");
    return pair_weighted_loss(s, config.beta, w);
}

ObjectiveOutput perpo_loss(const ScoredList& s, const ObjectiveConfig& config) {
    s.validate();
    auto w = margin_weights(s.disc_rewards, config.gamma);
    return pair_weighted_loss(s, config.beta, w);
}

ObjectiveOutput weighted_list_loss(const ScoredList& s, double beta,
                                   const PairWeightFn& weight) {
    s.validate();
    std::map<PairKey, double> w;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (s.disc_rewards[i].value > s.disc_rewards[j].value) {
                double v = weight(i, j, s);
                if (v < 0.0)
                    throw std::invalid_argument("weighted_list_loss: negative pair weight");
                if (v > 0.0) w[{i, j}] = v;
            }
    if (w.empty())
        throw std::invalid_argument("weighted_list_loss: no positively weighted pairs");
    return pair_weighted_loss(s, beta, w);
}

double perpo_erm_value(const ScoredList& s, const ObjectiveConfig& config) {
    s.validate();
    std::vector<double> r = implicit_scores(s);
    const auto& rew = s.disc_rewards;
    double total = 0.0;
    for (std::size_t i = 0; i < rew.size(); ++i)
        for (std::size_t j = 0; j < rew.size(); ++j)
            if (rew[i].value > rew[j].value) total += rew[i].value - rew[j].value;
    if (total <= 0.0)
        throw std::invalid_argument("perpo_erm_value: all rewards tied");
    double acc = 0.0;
    for (std::size_t i = 0; i < rew.size(); ++i) {
        double phi = 0.0;
        for (std::size_t m = 0; m < rew.size(); ++m) {
            if (rew[i].value > rew[m].value) phi += log_sigmoid(config.beta * (r[i] - r[m]));
            if (rew[m].value > rew[i].value) phi -= log_sigmoid(config.beta * (r[m] - r[i]));
        }
        acc += phi * rew[i].value;
    }
    return -acc / total;
}

ObjectiveOutput evaluate_list(const ScoredList& s, const ObjectiveConfig& config) {
    switch (config.method) {
        case Method::DPO: return dpo_loss(s, config);
        case Method::LIPO: return lipo_loss(s, config);
        case Method::PERPO: return perpo_loss(s, config);
        case Method::SFT:
            throw std::invalid_argument("evaluate_list: sft is not a list loss");
    }
    throw std::invalid_argument("evaluate_list: unknown method");
}

double finite_difference_check(const ScoredList& s, const ObjectiveConfig& config,
                               double h) {
    ObjectiveOutput base = evaluate_list(s, config);
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        ScoredList up = s;
        ScoredList dn = s;
        up.policy_logprobs[i] += h;
        dn.policy_logprobs[i] -= h;
        double fd = (evaluate_list(up, config).loss - evaluate_list(dn, config).loss) /
                    (2.0 * h);
        double an = base.grad_policy_logprobs[i];
        double denom = std::max({1.0, std::abs(an), std::abs(fd)});
        worst = std::max(worst, std::abs(fd - an) / denom);
    }
    return worst;
}

}  // namespace perpo::objectives
