#include "perpo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "perpo/util.hpp"

namespace perpo::tasks {

using ordered_json = nlohmann::ordered_json;

std::string kind_name(TaskKind k) {
    return k == TaskKind::Grounding ? "grounding" : "ocr";
}

TaskKind kind_from_name(const std::string& name) {
    if (name == "grounding") return TaskKind::Grounding;
    if (name == "ocr") return TaskKind::Ocr;
    throw std::invalid_argument("kind_from_name: unknown task kind '" + name + "'");
}

const std::vector<double>& TaskInstance::features() const {
    if (const auto* g = std::get_if<GroundingInstance>(&body)) return g->features;
    return std::get<OcrInstance>(body).features;
}

int TaskSet::vocab_size() const {
    return kind == TaskKind::Grounding ? params.grid_size + 1 : params.alphabet_size;
}

int TaskSet::response_len() const {
    return kind == TaskKind::Grounding ? 4 : params.length;
}

int TaskSet::feature_dim() const {
    return kind == TaskKind::Grounding ? 2 * params.grid_size * params.grid_size
                                       : params.length * params.alphabet_size;
}

namespace {

struct CellBox {
    int x0, y0, x1, y1;  // half-open cell spans [x0, x1) x [y0, y1)
    bool operator==(const CellBox&) const = default;
};

CellBox sample_box(rng::Engine& eng, int grid) {
    int hi = std::min(4, grid);
    int w = 2 + static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(hi - 1)));
    int h = 2 + static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(hi - 1)));
    int x = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(grid - w + 1)));
    int y = static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(grid - h + 1)));
    return {x, y, x + w, y + h};
}

void paint(std::vector<double>& grid_plane, int grid, const CellBox& b, std::size_t offset) {
    for (int y = b.y0; y < b.y1; ++y)
        for (int x = b.x0; x < b.x1; ++x)
            grid_plane[offset + static_cast<std::size_t>(y) * grid + x] = 1.0;
}

}  // namespace

std::vector<GroundingInstance> gen_grounding(std::uint64_t seed, int count, int grid_size) {
    if (count <= 0 || grid_size < 4)
        throw std::invalid_argument("gen_grounding: count > 0 and grid_size >= 4 required");
    std::vector<GroundingInstance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        rng::Engine eng(seeds::derive(seed, "grounding", static_cast<std::uint64_t>(i)));
        CellBox target = sample_box(eng, grid_size);
        int n_distract = 2 + static_cast<int>(rng::bounded(eng, 3));

        GroundingInstance inst;
        inst.grid_size = grid_size;
        std::size_t cells = static_cast<std::size_t>(grid_size) * grid_size;
        inst.features.assign(2 * cells, 0.0);
        paint(inst.features, grid_size, target, 0);       // cue plane: target only
        paint(inst.features, grid_size, target, cells);   // occupancy plane
        for (int d = 0; d < n_distract; ++d) {
            CellBox b = sample_box(eng, grid_size);
            while (b == target) b = sample_box(eng, grid_size);
            paint(inst.features, grid_size, b, cells);
        }
        inst.truth_box = {static_cast<double>(target.x0), static_cast<double>(target.y0),
                          static_cast<double>(target.x1), static_cast<double>(target.y1)};
        out.push_back(std::move(inst));
    }
    return out;
}

std::vector<OcrInstance> gen_ocr(std::uint64_t seed, int count, int alphabet_size,
                                 int length, double noise) {
    if (count <= 0 || alphabet_size < 2 || length < 1 || noise < 0.0)
        throw std::invalid_argument("gen_ocr: bad parameters");
    std::vector<OcrInstance> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        rng::Engine eng(seeds::derive(seed, "ocr", static_cast<std::uint64_t>(i)));
        OcrInstance inst;
        inst.alphabet_size = alphabet_size;
        inst.truth_text.tokens.reserve(static_cast<std::size_t>(length));
        for (int p = 0; p < length; ++p)
            inst.truth_text.tokens.push_back(
                static_cast<int>(rng::bounded(eng, static_cast<std::uint64_t>(alphabet_size))));
        if (alphabet_size <= 26) {
            std::string s;
            for (int t : inst.truth_text.tokens) s.push_back(static_cast<char>('a' + t));
            inst.truth_text.text = s;
        }
        inst.features.assign(static_cast<std::size_t>(length) * alphabet_size, 0.0);
        for (int p = 0; p < length; ++p)
            inst.features[static_cast<std::size_t>(p) * alphabet_size +
                          inst.truth_text.tokens[static_cast<std::size_t>(p)]] = 1.0;
        if (noise > 0.0)
            for (double& f : inst.features)
                f = fmt::round_places(f + noise * rng::gaussian(eng), 6);
        out.push_back(std::move(inst));
    }
    return out;
}

TaskSet make_grounding_set(std::uint64_t seed, int count, int grid_size) {
    TaskSet set;
    set.kind = TaskKind::Grounding;
    set.seed = seed;
    set.params.grid_size = grid_size;
    auto insts = gen_grounding(seed, count, grid_size);
    set.instances.reserve(insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i)
        set.instances.push_back({static_cast<int>(i), std::move(insts[i])});
    return set;
}

TaskSet make_ocr_set(std::uint64_t seed, int count, int alphabet_size, int length,
                     double noise) {
    TaskSet set;
    set.kind = TaskKind::Ocr;
    set.seed = seed;
    set.params.alphabet_size = alphabet_size;
    set.params.length = length;
    set.params.noise = noise;
    auto insts = gen_ocr(seed, count, alphabet_size, length, noise);
    set.instances.reserve(insts.size());
    for (std::size_t i = 0; i < insts.size(); ++i)
        set.instances.push_back({static_cast<int>(i), std::move(insts[i])});
    return set;
}

BoundingBox decode_box(const TokenSequence& tokens, int grid_size) {
    if (tokens.tokens.size() != 4)
        throw std::invalid_argument("decode_box: expected exactly 4 tokens");
    for (int t : tokens.tokens)
        if (t < 0 || t > grid_size)
            throw std::invalid_argument("decode_box: token out of range");
    double a = tokens.tokens[0], b = tokens.tokens[1];
    double c = tokens.tokens[2], d = tokens.tokens[3];
    if (a > c) std::swap(a, c);
    if (b > d) std::swap(b, d);
    return {a, b, c, d};
}

TokenSequence encode_box(const BoundingBox& box, int grid_size) {
    if (!box.valid())
        throw std::invalid_argument("encode_box: invalid box");
    TokenSequence seq;
    for (double v : {box.x_min, box.y_min, box.x_max, box.y_max}) {
        double r = std::round(v);
        if (r != v || r < 0.0 || r > static_cast<double>(grid_size))
            throw std::invalid_argument("encode_box: coordinate not on the grid");
        seq.tokens.push_back(static_cast<int>(r));
    }
    return seq;
}

TokenSequence truth_tokens(const TaskInstance& inst) {
    if (const auto* g = std::get_if<GroundingInstance>(&inst.body))
        return encode_box(g->truth_box, g->grid_size);
    return std::get<OcrInstance>(inst.body).truth_text;
}

RewardValue score_response(const TaskInstance& inst, const TokenSequence& response) {
    if (const auto* g = std::get_if<GroundingInstance>(&inst.body)) {
        BoundingBox pred;
        try {
            pred = decode_box(response, g->grid_size);
        } catch (const std::invalid_argument&) {
            return {0.0};
        }
        return metrics::iou(pred, g->truth_box);
    }
    const auto& o = std::get<OcrInstance>(inst.body);
    return metrics::ocr_reward(response, o.truth_text);
}

namespace {

[[noreturn]] void file_error(const std::string& path, std::size_t line,
                             const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void write_tasks(const TaskSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_tasks: cannot open " + path);
    ordered_json manifest;
    manifest["perpo_tasks"] = 1;
    manifest["kind"] = kind_name(set.kind);
    manifest["seed"] = set.seed;
    manifest["count"] = set.instances.size();
    if (set.kind == TaskKind::Grounding) {
        manifest["params"] = {{"grid_size", set.params.grid_size}};
    } else {
        manifest["params"] = {{"alphabet_size", set.params.alphabet_size},
                              {"length", set.params.length},
                              {"noise", set.params.noise}};
    }
    out << manifest.dump() << '\n';
    for (const auto& inst : set.instances) {
        ordered_json rec;
        rec["id"] = inst.id;
        rec["kind"] = kind_name(inst.kind());
        rec["features"] = inst.features();
        if (const auto* g = std::get_if<GroundingInstance>(&inst.body)) {
            rec["truth"] = {g->truth_box.x_min, g->truth_box.y_min, g->truth_box.x_max,
                            g->truth_box.y_max};
        } else {
            rec["truth"] = std::get<OcrInstance>(inst.body).truth_text.tokens;
        }
        out << rec.dump() << '\n';
    }
    if (!out)
        throw std::runtime_error("write_tasks: write failed for " + path);
}

TaskSet read_tasks(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("read_tasks: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        file_error(path, 1, "missing manifest line");

    TaskSet set;
    std::size_t expected = 0;
    try {
        ordered_json m = ordered_json::parse(line);
        if (!m.contains("perpo_tasks") || m["perpo_tasks"].get<int>() != 1)
            file_error(path, 1, "not a perpo tasks file");
        set.kind = kind_from_name(m.at("kind").get<std::string>());
        set.seed = m.at("seed").get<std::uint64_t>();
        expected = m.at("count").get<std::size_t>();
        const auto& p = m.at("params");
        if (set.kind == TaskKind::Grounding) {
            set.params.grid_size = p.at("grid_size").get<int>();
            if (set.params.grid_size < 4)
                file_error(path, 1, "invariant violated: grid_size >= 4");
        } else {
            set.params.alphabet_size = p.at("alphabet_size").get<int>();
            set.params.length = p.at("length").get<int>();
            set.params.noise = p.at("noise").get<double>();
            if (set.params.alphabet_size < 2 || set.params.length < 1)
                file_error(path, 1, "invariant violated: alphabet_size >= 2, length >= 1");
        }
    } catch (const nlohmann::json::exception& e) {
        file_error(path, 1, std::string("manifest: ") + e.what());
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        TaskInstance inst;
        try {
            ordered_json r = ordered_json::parse(line);
            inst.id = r.at("id").get<int>();
            if (kind_from_name(r.at("kind").get<std::string>()) != set.kind)
                file_error(path, lineno, "field 'kind' does not match manifest");
            auto features = r.at("features").get<std::vector<double>>();
            if (static_cast<int>(features.size()) != set.feature_dim())
                file_error(path, lineno, "invariant violated: feature vector length");
            if (set.kind == TaskKind::Grounding) {
                auto t = r.at("truth").get<std::vector<double>>();
                if (t.size() != 4)
                    file_error(path, lineno, "field 'truth' must have 4 coordinates");
                GroundingInstance g;
                g.grid_size = set.params.grid_size;
                g.features = std::move(features);
                g.truth_box = {t[0], t[1], t[2], t[3]};
                double gmax = static_cast<double>(g.grid_size);
                if (!g.truth_box.valid() || t[0] < 0 || t[1] < 0 || t[2] > gmax || t[3] > gmax)
                    file_error(path, lineno, "invariant violated: truth_box within [0, G]^2");
                inst.body = std::move(g);
            } else {
                OcrInstance o;
                o.alphabet_size = set.params.alphabet_size;
                o.features = std::move(features);
                o.truth_text.tokens = r.at("truth").get<std::vector<int>>();
                if (static_cast<int>(o.truth_text.tokens.size()) != set.params.length)
                    file_error(path, lineno, "invariant violated: truth length");
                for (int t : o.truth_text.tokens)
                    if (t < 0 || t >= o.alphabet_size)
                        file_error(path, lineno, "invariant violated: truth token in alphabet");
                if (o.alphabet_size <= 26) {
                    std::string s;
                    for (int t : o.truth_text.tokens) s.push_back(static_cast<char>('a' + t));
                    o.truth_text.text = s;
                }
                inst.body = std::move(o);
            }
        } catch (const nlohmann::json::exception& e) {
            file_error(path, lineno, e.what());
        }
        set.instances.push_back(std::move(inst));
    }
    if (set.instances.size() != expected)
        file_error(path, lineno, "record count does not match manifest count");
    return set;
}

}  // namespace perpo::tasks
