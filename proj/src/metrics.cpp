#include "perpo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace perpo::metrics {

TokenSequence TokenSequence::from_text(std::string_view s) {
    TokenSequence seq;
    seq.tokens.reserve(s.size());
    for (char c : s) seq.tokens.push_back(static_cast<unsigned char>(c));
    seq.text = std::string(s);
    return seq;
}

RewardValue iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.valid() || !b.valid())
        throw std::invalid_argument("iou: invalid bounding box");
    double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    double inter = std::max(0.0, ix) * std::max(0.0, iy);
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return {0.0};
    return {inter / uni};
}

double ap_at_50(std::span<const std::pair<BoundingBox, BoundingBox>> pairs) {
    if (pairs.empty())
        throw std::invalid_argument("ap_at_50: no evaluable predictions");
    std::size_t hits = 0;
    for (const auto& [pred, truth] : pairs)
        if (iou(pred, truth).value >= 0.5) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::size_t edit_distance(const TokenSequence& a, const TokenSequence& b) {
    const auto& s = a.tokens;
    const auto& t = b.tokens;
    if (s.empty()) return t.size();
    if (t.empty()) return s.size();

    // Single-row dynamic program.
    std::vector<std::size_t> row(t.size() + 1);
    for (std::size_t j = 0; j <= t.size(); ++j) row[j] = j;
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::size_t corner = row[0];
        row[0] = i + 1;
        for (std::size_t j = 0; j < t.size(); ++j) {
            std::size_t up = row[j + 1];
            if (s[i] == t[j]) {
                row[j + 1] = corner;
            } else {
                row[j + 1] = 1 + std::min({corner, up, row[j]});
            }
            corner = up;
        }
    }
    return row[t.size()];
}

RewardValue ocr_reward(const TokenSequence& pred, const TokenSequence& truth) {
    if (truth.tokens.empty())
        throw std::invalid_argument("ocr_reward: empty truth");
    double dist = static_cast<double>(edit_distance(pred, truth));
    double denom = static_cast<double>(std::max(pred.tokens.size(), truth.tokens.size()));
    double v = 1.0 - dist / denom;
    return {std::clamp(v, 0.0, 1.0)};
}

PrfScores token_prf(const TokenSequence& pred, const TokenSequence& truth) {
    std::map<int, std::size_t> truth_counts;
    for (int t : truth.tokens) ++truth_counts[t];
    std::size_t overlap = 0;
    for (int t : pred.tokens) {
        auto it = truth_counts.find(t);
        if (it != truth_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    PrfScores out;
    if (!pred.tokens.empty())
        out.precision = static_cast<double>(overlap) / static_cast<double>(pred.tokens.size());
    if (!truth.tokens.empty())
        out.recall = static_cast<double>(overlap) / static_cast<double>(truth.tokens.size());
    if (out.precision + out.recall > 0.0)
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

namespace {

// Clipped n-gram matches and total prediction n-grams for one order.
std::pair<std::size_t, std::size_t> ngram_overlap(const std::vector<int>& pred,
                                                  const std::vector<int>& truth,
                                                  std::size_t n) {
    if (pred.size() < n) return {0, 0};
    std::map<std::vector<int>, std::size_t> truth_grams;
    if (truth.size() >= n)
        for (std::size_t i = 0; i + n <= truth.size(); ++i)
            ++truth_grams[std::vector<int>(truth.begin() + i, truth.begin() + i + n)];
    std::size_t total = pred.size() - n + 1;
    std::size_t matched = 0;
    for (std::size_t i = 0; i + n <= pred.size(); ++i) {
        std::vector<int> g(pred.begin() + i, pred.begin() + i + n);
        auto it = truth_grams.find(g);
        if (it != truth_grams.end() && it->second > 0) {
            --it->second;
            ++matched;
        }
    }
    return {matched, total};
}

}  // namespace

double bleu(const TokenSequence& pred, const TokenSequence& truth) {
    if (pred.tokens.empty()) return 0.0;
    double log_prec_sum = 0.0;
    for (std::size_t n = 1; n <= 4; ++n) {
        auto [matched, total] = ngram_overlap(pred.tokens, truth.tokens, n);
        // Add-one smoothing keeps every order's precision positive.
        double p = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
        log_prec_sum += std::log(p);
    }
    double c = static_cast<double>(pred.tokens.size());
    double r = static_cast<double>(truth.tokens.size());
    double brevity = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return brevity * std::exp(log_prec_sum / 4.0);
}

double list_margin(std::span<const RewardValue> rewards) {
    if (rewards.empty())
        throw std::invalid_argument("list_margin: empty reward list");
    double lo = rewards[0].value, hi = rewards[0].value;
    for (const auto& r : rewards) {
        lo = std::min(lo, r.value);
        hi = std::max(hi, r.value);
    }
    return hi - lo;
}

}  // namespace perpo::metrics
