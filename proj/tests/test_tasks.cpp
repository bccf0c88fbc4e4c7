#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "perpo/metrics.hpp"
#include "perpo/tasks.hpp"
#include "perpo/util.hpp"
#include "test_support.hpp"

using namespace perpo;
using metrics::BoundingBox;
using metrics::TokenSequence;

TEST_CASE("kind names round-trip") {
    CHECK_EQ(tasks::kind_name(tasks::TaskKind::Grounding), "grounding");
    CHECK_EQ(tasks::kind_name(tasks::TaskKind::Ocr), "ocr");
    CHECK_EQ(tasks::kind_from_name("grounding"), tasks::TaskKind::Grounding);
    CHECK_EQ(tasks::kind_from_name("ocr"), tasks::TaskKind::Ocr);
    CHECK_THROWS_AS(tasks::kind_from_name("vqa"), std::invalid_argument);
}

TEST_CASE("gen_grounding shape and determinism") {
    const int grid = 8;
    auto a = tasks::gen_grounding(77, 25, grid);
    auto b = tasks::gen_grounding(77, 25, grid);
    REQUIRE_EQ(a.size(), 25u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK_EQ(a[i].features, b[i].features);
        CHECK_EQ(a[i].truth_box, b[i].truth_box);
    }

    auto c = tasks::gen_grounding(78, 25, grid);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].truth_box == c[i].truth_box)) differs = true;
    CHECK(differs);

    std::size_t cells = static_cast<std::size_t>(grid) * grid;
    for (const auto& inst : a) {
        REQUIRE_EQ(inst.features.size(), 2 * cells);
        const BoundingBox& t = inst.truth_box;
        CHECK(t.valid());
        CHECK(t.x_min >= 0);
        CHECK(t.y_min >= 0);
        CHECK(t.x_max <= grid);
        CHECK(t.y_max <= grid);
        CHECK(t.x_max - t.x_min >= 2);
        CHECK(t.y_max - t.y_min >= 2);
        CHECK_EQ(t.x_min, std::floor(t.x_min));
        CHECK_EQ(t.y_min, std::floor(t.y_min));

        // The cue plane marks exactly the target cells; the occupancy plane
        // covers the cue plane plus the distractors.
        std::size_t cue_on = 0;
        for (std::size_t k = 0; k < cells; ++k) {
            CHECK((inst.features[k] == 0.0 || inst.features[k] == 1.0));
            if (inst.features[k] == 1.0) {
                ++cue_on;
                CHECK_EQ(inst.features[cells + k], 1.0);
                std::size_t x = k % grid, y = k / grid;
                CHECK(static_cast<double>(x) >= t.x_min);
                CHECK(static_cast<double>(x) < t.x_max);
                CHECK(static_cast<double>(y) >= t.y_min);
                CHECK(static_cast<double>(y) < t.y_max);
            }
        }
        CHECK_EQ(cue_on, static_cast<std::size_t>(t.area()));
        // Some occupied cell lies outside the target (a distractor exists).
        bool extra = false;
        for (std::size_t k = 0; k < cells; ++k)
            if (inst.features[cells + k] == 1.0 && inst.features[k] == 0.0) extra = true;
        CHECK(extra);
    }
    CHECK_THROWS_AS(tasks::gen_grounding(1, 0, grid), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_grounding(1, 5, 3), std::invalid_argument);
}

TEST_CASE("gen_ocr shape and rounding") {
    auto a = tasks::gen_ocr(5, 20, 6, 7, 0.25);
    auto b = tasks::gen_ocr(5, 20, 6, 7, 0.25);
    REQUIRE_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK_EQ(a[i].features, b[i].features);
        CHECK_EQ(a[i].truth_text.tokens, b[i].truth_text.tokens);
    }
    for (const auto& inst : a) {
        REQUIRE_EQ(inst.truth_text.tokens.size(), 7u);
        REQUIRE_EQ(inst.features.size(), 42u);
        for (int t : inst.truth_text.tokens) {
            CHECK(t >= 0);
            CHECK(t < 6);
        }
        REQUIRE(inst.truth_text.text.has_value());
        CHECK_EQ(inst.truth_text.text->size(), 7u);
        // Storage precision: features are exactly 6-decimal values.
        for (double f : inst.features) CHECK_EQ(f, fmt::round_places(f, 6));
    }
    CHECK_THROWS_AS(tasks::gen_ocr(5, 10, 1, 7, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_ocr(5, 10, 6, 0, 0.25), std::invalid_argument);
    CHECK_THROWS_AS(tasks::gen_ocr(5, 10, 6, 7, -0.1), std::invalid_argument);
}

TEST_CASE("decode_box canonicalizes coordinate order") {
    TokenSequence swapped{{3, 1, 2, 4}, {}};
    CHECK_EQ(tasks::decode_box(swapped, 8), BoundingBox{2, 1, 3, 4});
    TokenSequence straight{{2, 1, 3, 4}, {}};
    CHECK_EQ(tasks::decode_box(straight, 8), BoundingBox{2, 1, 3, 4});
    TokenSequence both{{5, 6, 1, 2}, {}};
    CHECK_EQ(tasks::decode_box(both, 8), BoundingBox{1, 2, 5, 6});

    CHECK_THROWS_AS(tasks::decode_box(TokenSequence{{1, 2, 3}, {}}, 8), std::invalid_argument);
    CHECK_THROWS_AS(tasks::decode_box(TokenSequence{{1, 2, 3, 9}, {}}, 8),
                    std::invalid_argument);
}

TEST_CASE("encode_box and decode_box round-trip") {
    BoundingBox box{1, 2, 3, 4};
    TokenSequence tokens = tasks::encode_box(box, 8);
    CHECK_EQ(tokens.tokens, std::vector<int>{1, 2, 3, 4});
    CHECK_EQ(tasks::decode_box(tokens, 8), box);
    CHECK_THROWS_AS(tasks::encode_box({0.5, 0, 2, 2}, 8), std::invalid_argument);
    CHECK_THROWS_AS(tasks::encode_box({0, 0, 9, 2}, 8), std::invalid_argument);
    CHECK_THROWS_AS(tasks::encode_box({2, 0, 1, 2}, 8), std::invalid_argument);
}

TEST_CASE("score_response exhaustive grounding oracle") {
    const int grid = 6;
    tasks::TaskSet set = tasks::make_grounding_set(31, 3, grid);
    for (const auto& inst : set.instances) {
        const auto& g = std::get<tasks::GroundingInstance>(inst.body);
        for (int a = 0; a <= grid; ++a)
            for (int b = 0; b <= grid; ++b)
                for (int c = 0; c <= grid; ++c)
                    for (int d = 0; d <= grid; ++d) {
                        TokenSequence resp{{a, b, c, d}, {}};
                        double got = tasks::score_response(inst, resp).value;
                        double expected =
                            metrics::iou(tasks::decode_box(resp, grid), g.truth_box).value;
                        CHECK_EQ(got, expected);
                        if (got == 1.0)
                            CHECK_EQ(tasks::decode_box(resp, grid), g.truth_box);
                    }
        // The encoded truth is the unique-in-canonical-form perfect answer.
        CHECK_EQ(tasks::score_response(inst, tasks::truth_tokens(inst)).value, 1.0);
    }
}

TEST_CASE("score_response handles undecodable input") {
    tasks::TaskSet set = tasks::make_grounding_set(31, 1, 8);
    CHECK_EQ(tasks::score_response(set.instances[0], TokenSequence{{1, 2, 3}, {}}).value, 0.0);
    CHECK_EQ(tasks::score_response(set.instances[0], TokenSequence{{1, 2, 3, 12}, {}}).value,
             0.0);
    CHECK_EQ(tasks::score_response(set.instances[0], TokenSequence{{0, 0, 0, 0}, {}}).value,
             0.0);
}

TEST_CASE("score_response on ocr is the edit-similarity reward") {
    tasks::TaskSet set = tasks::make_ocr_set(13, 4, 6, 7, 0.25);
    for (const auto& inst : set.instances) {
        TokenSequence truth = tasks::truth_tokens(inst);
        CHECK_EQ(tasks::score_response(inst, truth).value, 1.0);
        TokenSequence off = truth;
        off.tokens[0] = (off.tokens[0] + 1) % 6;
        CHECK_EQ(tasks::score_response(inst, off).value,
                 metrics::ocr_reward(off, truth).value);
    }
}

TEST_CASE("task set accessors") {
    tasks::TaskSet g = tasks::make_grounding_set(3, 5, 8);
    CHECK_EQ(g.vocab_size(), 9);
    CHECK_EQ(g.response_len(), 4);
    CHECK_EQ(g.feature_dim(), 128);
    for (int i = 0; i < 5; ++i) CHECK_EQ(g.instances[static_cast<std::size_t>(i)].id, i);

    tasks::TaskSet o = tasks::make_ocr_set(3, 4, 6, 7, 0.25);
    CHECK_EQ(o.vocab_size(), 6);
    CHECK_EQ(o.response_len(), 7);
    CHECK_EQ(o.feature_dim(), 42);
}

TEST_CASE("tasks file round-trip and byte determinism") {
    testsupport::TempDir dir("tasks_io");
    for (bool grounding : {true, false}) {
        tasks::TaskSet set = grounding ? tasks::make_grounding_set(9, 12, 8)
                                       : tasks::make_ocr_set(9, 12, 6, 5, 0.3);
        std::string path = dir.file(grounding ? "g.jsonl" : "o.jsonl");
        tasks::write_tasks(set, path);
        tasks::TaskSet back = tasks::read_tasks(path);
        CHECK_EQ(back.kind, set.kind);
        CHECK_EQ(back.seed, set.seed);
        REQUIRE_EQ(back.instances.size(), set.instances.size());
        for (std::size_t i = 0; i < set.instances.size(); ++i) {
            CHECK_EQ(back.instances[i].id, set.instances[i].id);
            CHECK_EQ(back.instances[i].features(), set.instances[i].features());
            CHECK_EQ(tasks::truth_tokens(back.instances[i]).tokens,
                     tasks::truth_tokens(set.instances[i]).tokens);
        }
        std::string again = dir.file("again.jsonl");
        tasks::write_tasks(back, again);
        CHECK_EQ(testsupport::slurp(again), testsupport::slurp(path));
    }
}

TEST_CASE("read_tasks validation errors") {
    testsupport::TempDir dir("tasks_err");
    CHECK_THROWS_AS(tasks::read_tasks(dir.file("missing.jsonl")), std::runtime_error);

    std::string empty = dir.file("empty.jsonl");
    testsupport::spit(empty, "");
    CHECK_THROWS_WITH_AS(tasks::read_tasks(empty),
                         doctest::Contains("missing manifest"), std::runtime_error);

    std::string wrong_magic = dir.file("magic.jsonl");
    testsupport::spit(wrong_magic, "{\"something\":1}\n");
    CHECK_THROWS_AS(tasks::read_tasks(wrong_magic), std::runtime_error);

    tasks::TaskSet set = tasks::make_grounding_set(9, 3, 8);
    std::string good = dir.file("good.jsonl");
    tasks::write_tasks(set, good);
    std::string text = testsupport::slurp(good);

    // Truncate the final record: count no longer matches the manifest.
    std::string truncated = text.substr(0, text.rfind('{'));
    std::string short_file = dir.file("short.jsonl");
    testsupport::spit(short_file, truncated);
    CHECK_THROWS_WITH_AS(tasks::read_tasks(short_file), doctest::Contains("count"),
                         std::runtime_error);

    std::string garbage = dir.file("garbage.jsonl");
    testsupport::spit(garbage, text + "not json\n");
    CHECK_THROWS_AS(tasks::read_tasks(garbage), std::runtime_error);
}
