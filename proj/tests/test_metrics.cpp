#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "perpo/metrics.hpp"
#include "perpo/util.hpp"
#include "test_support.hpp"

using namespace perpo;
using metrics::BoundingBox;
using metrics::RewardValue;
using metrics::TokenSequence;

namespace {

BoundingBox random_box(rng::Engine& eng) {
    double x0 = rng::uniform53(eng) * 8.0;
    double y0 = rng::uniform53(eng) * 8.0;
    return {x0, y0, x0 + rng::uniform53(eng) * 6.0, y0 + rng::uniform53(eng) * 6.0};
}

// Plain memoized-recursive Levenshtein, the independent oracle.
std::size_t edit_oracle(const std::string& a, const std::string& b) {
    std::vector<std::vector<int>> memo(a.size() + 1, std::vector<int>(b.size() + 1, -1));
    std::function<int(int, int)> go = [&](int i, int j) -> int {
        int& slot = memo[i][j];
        if (slot >= 0) return slot;
        if (i == 0) return slot = j;
        if (j == 0) return slot = i;
        int sub = go(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
        int del = go(i - 1, j) + 1;
        int ins = go(i, j - 1) + 1;
        return slot = std::min({sub, del, ins});
    };
    return static_cast<std::size_t>(go(static_cast<int>(a.size()), static_cast<int>(b.size())));
}

std::vector<std::string> all_strings_up_to(std::size_t max_len, std::string_view alphabet) {
    std::vector<std::string> out{""};
    std::size_t level_begin = 0;
    for (std::size_t len = 1; len <= max_len; ++len) {
        std::size_t level_end = out.size();
        for (std::size_t i = level_begin; i < level_end; ++i)
            for (char c : alphabet) out.push_back(out[i] + c);
        level_begin = level_end;
    }
    return out;
}

}  // namespace

TEST_CASE("iou hand cases") {
    BoundingBox unit{0, 0, 2, 2};
    CHECK_EQ(metrics::iou(unit, unit).value, 1.0);
    CHECK_EQ(metrics::iou({0, 0, 1, 1}, {3, 3, 4, 4}).value, 0.0);
    CHECK_EQ(metrics::iou({0, 0, 2, 2}, {1, 1, 3, 3}).value, 1.0 / 7.0);
    // Boxes touching along an edge intersect with zero area.
    CHECK_EQ(metrics::iou({0, 0, 1, 1}, {1, 0, 2, 1}).value, 0.0);
}

TEST_CASE("iou zero-area union scores zero") {
    BoundingBox point{1, 1, 1, 1};
    CHECK_EQ(metrics::iou(point, point).value, 0.0);
}

TEST_CASE("iou rejects invalid boxes") {
    CHECK_THROWS_AS(metrics::iou({2, 0, 0, 2}, {0, 0, 1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(metrics::iou({0, 0, 1, 1}, {0, 2, 1, 1}), std::invalid_argument);
}

TEST_CASE("iou symmetry, range, identity on random boxes") {
    rng::Engine eng(seeds::derive(11, "iou-props"));
    for (int trial = 0; trial < 500; ++trial) {
        BoundingBox a = random_box(eng);
        BoundingBox b = random_box(eng);
        double ab = metrics::iou(a, b).value;
        CHECK_EQ(ab, metrics::iou(b, a).value);
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        if (a.area() > 0.0) CHECK_EQ(metrics::iou(a, a).value, 1.0);
    }
}

TEST_CASE("ap_at_50 inclusive threshold") {
    using Pair = std::pair<BoundingBox, BoundingBox>;
    // IoU 0.6 and 0.4 respectively.
    std::vector<Pair> two = {{{0, 0, 3, 1}, {0, 0, 5, 1}}, {{0, 0, 2, 1}, {0, 0, 5, 1}}};
    CHECK_EQ(metrics::ap_at_50(two), 0.5);
    // IoU exactly 0.5 counts as a hit.
    std::vector<Pair> boundary = {{{0, 0, 1, 1}, {0, 0, 1, 2}}};
    CHECK_EQ(metrics::iou(boundary[0].first, boundary[0].second).value, 0.5);
    CHECK_EQ(metrics::ap_at_50(boundary), 1.0);
    CHECK_THROWS_AS(metrics::ap_at_50(std::vector<Pair>{}), std::invalid_argument);
}

TEST_CASE("edit_distance hand cases") {
    auto t = [](std::string_view s) { return TokenSequence::from_text(s); };
    CHECK_EQ(metrics::edit_distance(t("abc"), t("abc")), 0u);
    CHECK_EQ(metrics::edit_distance(t(""), t("abc")), 3u);
    CHECK_EQ(metrics::edit_distance(t("abc"), t("")), 3u);
    CHECK_EQ(metrics::edit_distance(t("kitten"), t("sitting")), 3u);
    CHECK_EQ(metrics::edit_distance(t(""), t("")), 0u);
}

TEST_CASE("edit_distance matches recursive oracle exhaustively (len <= 6, 3 symbols)") {
    std::vector<std::string> strings = all_strings_up_to(6, "abc");
    REQUIRE_EQ(strings.size(), 1093u);
    std::size_t mismatches = 0;
    for (const auto& a : strings) {
        TokenSequence sa = TokenSequence::from_text(a);
        for (const auto& b : strings) {
            if (metrics::edit_distance(sa, TokenSequence::from_text(b)) != edit_oracle(a, b))
                ++mismatches;
        }
    }
    CHECK_EQ(mismatches, 0u);
}

TEST_CASE("edit_distance metric axioms on random strings") {
    rng::Engine eng(seeds::derive(11, "edit-axioms"));
    auto random_string = [&](std::size_t max_len) {
        std::string s;
        std::size_t len = rng::bounded(eng, max_len + 1);
        for (std::size_t i = 0; i < len; ++i)
            s.push_back(static_cast<char>('a' + rng::bounded(eng, 4)));
        return s;
    };
    for (int trial = 0; trial < 2000; ++trial) {
        std::string a = random_string(8), b = random_string(8), c = random_string(8);
        TokenSequence sa = TokenSequence::from_text(a);
        TokenSequence sb = TokenSequence::from_text(b);
        TokenSequence sc = TokenSequence::from_text(c);
        std::size_t dab = metrics::edit_distance(sa, sb);
        std::size_t dba = metrics::edit_distance(sb, sa);
        std::size_t dac = metrics::edit_distance(sa, sc);
        std::size_t dbc = metrics::edit_distance(sb, sc);
        CHECK_EQ(dab, dba);
        CHECK_EQ(dab == 0, a == b);
        CHECK(dac <= dab + dbc);
    }
}

TEST_CASE("ocr_reward hand cases") {
    auto t = [](std::string_view s) { return TokenSequence::from_text(s); };
    CHECK_EQ(metrics::ocr_reward(t("abcd"), t("abed")).value, 0.75);
    CHECK_EQ(metrics::ocr_reward(t(""), t("abc")).value, 0.0);
    CHECK_EQ(metrics::ocr_reward(t("abc"), t("abc")).value, 1.0);
    CHECK_THROWS_AS(metrics::ocr_reward(t("abc"), t("")), std::invalid_argument);
}

TEST_CASE("ocr_reward reverses the edit_distance ranking on equal-length candidates") {
    // The samplers emit fixed-length responses, so candidate sets share one
    // length; there the normalization is a fixed affine map of the distance.
    rng::Engine eng(seeds::derive(11, "ocr-rank"));
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t truth_len = 3 + rng::bounded(eng, 6);
        std::size_t cand_len = 3 + rng::bounded(eng, 6);
        std::string truth;
        for (std::size_t i = 0; i < truth_len; ++i)
            truth.push_back(static_cast<char>('a' + rng::bounded(eng, 3)));
        TokenSequence st = TokenSequence::from_text(truth);

        std::vector<std::size_t> dist;
        std::vector<double> reward;
        for (int k = 0; k < 6; ++k) {
            std::string cand;
            for (std::size_t i = 0; i < cand_len; ++i)
                cand.push_back(static_cast<char>('a' + rng::bounded(eng, 3)));
            TokenSequence sc = TokenSequence::from_text(cand);
            dist.push_back(metrics::edit_distance(sc, st));
            reward.push_back(metrics::ocr_reward(sc, st).value);
        }
        for (std::size_t i = 0; i < dist.size(); ++i)
            for (std::size_t j = 0; j < dist.size(); ++j) {
                CHECK_EQ(dist[i] < dist[j], reward[i] > reward[j]);
                CHECK_EQ(dist[i] == dist[j], reward[i] == reward[j]);
            }
    }
}

TEST_CASE("token_prf hand cases") {
    TokenSequence pred{{0, 1, 2}, {}};
    TokenSequence truth{{0, 1, 3}, {}};
    metrics::PrfScores s = metrics::token_prf(pred, truth);
    CHECK_EQ(s.precision, 2.0 / 3.0);
    CHECK_EQ(s.recall, 2.0 / 3.0);
    CHECK_EQ(s.f1, doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    metrics::PrfScores empty = metrics::token_prf(TokenSequence{}, truth);
    CHECK_EQ(empty.precision, 0.0);
    CHECK_EQ(empty.recall, 0.0);
    CHECK_EQ(empty.f1, 0.0);
}

TEST_CASE("token_prf counts multiset overlap") {
    TokenSequence pred{{5, 5, 5, 7}, {}};
    TokenSequence truth{{5, 5, 7, 7}, {}};
    metrics::PrfScores s = metrics::token_prf(pred, truth);
    CHECK_EQ(s.precision, 0.75);
    CHECK_EQ(s.recall, 0.75);
}

TEST_CASE("token_prf harmonic identity") {
    rng::Engine eng(seeds::derive(11, "prf-harmonic"));
    for (int trial = 0; trial < 500; ++trial) {
        TokenSequence pred, truth;
        std::size_t lp = rng::bounded(eng, 9);
        std::size_t lt = 1 + rng::bounded(eng, 8);
        for (std::size_t i = 0; i < lp; ++i)
            pred.tokens.push_back(static_cast<int>(rng::bounded(eng, 4)));
        for (std::size_t i = 0; i < lt; ++i)
            truth.tokens.push_back(static_cast<int>(rng::bounded(eng, 4)));
        metrics::PrfScores s = metrics::token_prf(pred, truth);
        if (s.precision + s.recall > 0.0) {
            CHECK_EQ(s.f1, 2.0 * s.precision * s.recall / (s.precision + s.recall));
        } else {
            CHECK_EQ(s.f1, 0.0);
        }
        CHECK_EQ(s.f1 == 0.0, s.precision * s.recall == 0.0);
    }
}

TEST_CASE("bleu hand cases") {
    TokenSequence truth{{1, 2, 3, 4, 5, 6}, {}};
    CHECK_EQ(metrics::bleu(truth, truth), 1.0);
    CHECK_EQ(metrics::bleu(TokenSequence{}, truth), 0.0);

    // One substitution in six tokens: smoothed precisions 6/7, 4/6, 2/5, 1/4.
    TokenSequence pred{{1, 2, 3, 9, 5, 6}, {}};
    double expected = std::pow((6.0 / 7.0) * (4.0 / 6.0) * (2.0 / 5.0) * (1.0 / 4.0), 0.25);
    CHECK_EQ(metrics::bleu(pred, truth), doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bleu brevity penalty and range") {
    TokenSequence truth{{1, 2, 3, 4, 5, 6}, {}};
    TokenSequence prefix{{1, 2, 3}, {}};
    // Perfect n-gram precisions, penalized only for brevity.
    double expected = std::exp(1.0 - 6.0 / 3.0);
    CHECK_EQ(metrics::bleu(prefix, truth), doctest::Approx(expected).epsilon(1e-12));

    rng::Engine eng(seeds::derive(11, "bleu-range"));
    for (int trial = 0; trial < 200; ++trial) {
        TokenSequence pred, t;
        std::size_t lp = 1 + rng::bounded(eng, 8);
        std::size_t lt = 1 + rng::bounded(eng, 8);
        for (std::size_t i = 0; i < lp; ++i)
            pred.tokens.push_back(static_cast<int>(rng::bounded(eng, 3)));
        for (std::size_t i = 0; i < lt; ++i)
            t.tokens.push_back(static_cast<int>(rng::bounded(eng, 3)));
        double b = metrics::bleu(pred, t);
        CHECK(b >= 0.0);
        CHECK(b <= 1.0);
    }
}

TEST_CASE("list_margin cases and permutation invariance") {
    std::vector<RewardValue> pair{{0.9}, {0.05}};
    CHECK_EQ(metrics::list_margin(pair), 0.9 - 0.05);
    CHECK_EQ(metrics::list_margin(std::vector<RewardValue>{{0.4}}), 0.0);
    CHECK_EQ(metrics::list_margin(std::vector<RewardValue>{{0.3}, {0.3}, {0.3}}), 0.0);
    CHECK_THROWS_AS(metrics::list_margin(std::vector<RewardValue>{}), std::invalid_argument);

    rng::Engine eng(seeds::derive(11, "margin-perm"));
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<RewardValue> values;
        std::size_t n = 2 + rng::bounded(eng, 6);
        for (std::size_t i = 0; i < n; ++i) values.push_back({rng::uniform53(eng)});
        double before = metrics::list_margin(values);
        rng::shuffle(values, eng);
        CHECK_EQ(metrics::list_margin(values), before);
    }
}

TEST_CASE("TokenSequence::from_text maps bytes") {
    TokenSequence s = TokenSequence::from_text("abc");
    CHECK_EQ(s.tokens, std::vector<int>{97, 98, 99});
    REQUIRE(s.text.has_value());
    CHECK_EQ(*s.text, "abc");
}
