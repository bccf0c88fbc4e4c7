#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace perpo::metrics {

/// Axis-aligned box in task units. Invariants: x_min <= x_max, y_min <= y_max.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool valid() const { return x_min <= x_max && y_min <= y_max; }
    double area() const { return (x_max - x_min) * (y_max - y_min); }

    bool operator==(const BoundingBox&) const = default;
};

/// A response as an ordered list of vocabulary indices. `text` is an
/// optional character rendering used by the OCR task.
struct TokenSequence {
    std::vector<int> tokens;
    std::optional<std::string> text;

    static TokenSequence from_text(std::string_view s);

    bool operator==(const TokenSequence& o) const { return tokens == o.tokens; }
    bool operator<(const TokenSequence& o) const { return tokens < o.tokens; }
};

/// Discriminative reward score, always in [0, 1], higher is better.
struct RewardValue {
    double value = 0.0;
};

/// Intersection over union. Zero-area unions (two degenerate boxes)
/// score 0 rather than erroring.
RewardValue iou(const BoundingBox& a, const BoundingBox& b);

/// Fraction of (prediction, truth) pairs with IoU >= 0.5. Single-target
/// grounding, so this is per-sample accuracy at the inclusive threshold.
double ap_at_50(std::span<const std::pair<BoundingBox, BoundingBox>> pairs);

/// Levenshtein distance with unit-cost insert/delete/substitute.
std::size_t edit_distance(const TokenSequence& a, const TokenSequence& b);

/// Edit distance normalized to a higher-is-better similarity:
/// 1 - dist / max(len(pred), len(truth)), clamped to [0, 1].
RewardValue ocr_reward(const TokenSequence& pred, const TokenSequence& truth);

struct PrfScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Token-level precision/recall/F1 from multiset-intersection counts.
/// Ratios with a zero denominator are 0 by convention.
PrfScores token_prf(const TokenSequence& pred, const TokenSequence& truth);

/// Sentence-level BLEU-4: add-one smoothing on every n-gram precision,
/// uniform weights, standard brevity penalty. Empty prediction scores 0.
double bleu(const TokenSequence& pred, const TokenSequence& truth);

/// max(rewards) - min(rewards); the data-quality margin of a response list.
double list_margin(std::span<const RewardValue> rewards);

}  // namespace perpo::metrics
