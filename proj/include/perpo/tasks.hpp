#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "perpo/metrics.hpp"

namespace perpo::tasks {

using metrics::BoundingBox;
using metrics::RewardValue;
using metrics::TokenSequence;

/// Grounding problem: an occupancy grid with a cued target object. The
/// response is 4 discretized coordinate tokens (x_min, y_min, x_max, y_max),
/// each in 0..grid_size.
struct GroundingInstance {
    std::vector<double> features;  // cue grid then occupancy grid, G*G each
    BoundingBox truth_box;
    int grid_size = 0;
};

/// OCR problem: a noisily encoded character string to transcribe.
struct OcrInstance {
    std::vector<double> features;  // per-character one-hots plus noise
    TokenSequence truth_text;
    int alphabet_size = 0;
};

enum class TaskKind { Grounding, Ocr };

std::string kind_name(TaskKind k);
TaskKind kind_from_name(const std::string& name);

/// One problem with its bound reward: IoU for grounding, normalized edit
/// similarity for OCR.
struct TaskInstance {
    int id = 0;
    std::variant<GroundingInstance, OcrInstance> body;

    TaskKind kind() const {
        return std::holds_alternative<GroundingInstance>(body) ? TaskKind::Grounding
                                                               : TaskKind::Ocr;
    }
    const std::vector<double>& features() const;
};

/// Generation parameters recorded alongside a task set.
struct TaskParams {
    int grid_size = 0;       // grounding
    int alphabet_size = 0;   // ocr
    int length = 0;          // ocr
    double noise = 0.0;      // ocr
};

struct TaskSet {
    TaskKind kind = TaskKind::Grounding;
    std::uint64_t seed = 0;
    TaskParams params;
    std::vector<TaskInstance> instances;

    int vocab_size() const;    // grid_size + 1 or alphabet_size
    int response_len() const;  // 4 or length
    int feature_dim() const;
};

std::vector<GroundingInstance> gen_grounding(std::uint64_t seed, int count, int grid_size);
std::vector<OcrInstance> gen_ocr(std::uint64_t seed, int count, int alphabet_size,
                                 int length, double noise);

TaskSet make_grounding_set(std::uint64_t seed, int count, int grid_size);
TaskSet make_ocr_set(std::uint64_t seed, int count, int alphabet_size, int length,
                     double noise);

/// Maps 4 coordinate tokens to a box, swapping coordinates when needed so
/// the result is always valid. Wrong token count throws.
BoundingBox decode_box(const TokenSequence& tokens, int grid_size);
TokenSequence encode_box(const BoundingBox& box, int grid_size);

/// Ground-truth response tokens: the encoded box or the truth text.
TokenSequence truth_tokens(const TaskInstance& inst);

/// Scores a response with the instance's bound reward. Undecodable or
/// out-of-range responses score 0 so malformed rollouts stay scoreable.
RewardValue score_response(const TaskInstance& inst, const TokenSequence& response);

/// Line-delimited task file: a manifest line, then one instance per line.
/// Field names are documented in docs/formats.md.
void write_tasks(const TaskSet& set, const std::string& path);
TaskSet read_tasks(const std::string& path);

}  // namespace perpo::tasks
