#include "perpo/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"
#include "perpo/util.hpp"

namespace perpo::pipeline {

using ordered_json = nlohmann::ordered_json;

std::string reject_reason_name(RejectReason r) {
    switch (r) {
        case RejectReason::TooFewDistinct: return "too_few_distinct";
        case RejectReason::AllTied: return "all_tied";
        case RejectReason::MarginBelowThreshold: return "margin_below_threshold";
    }
    throw std::invalid_argument("reject_reason_name: unknown reason");
}

std::vector<TokenSequence> sample_candidates(const policy::PolicyParams& params,
                                             const tasks::TaskInstance& inst, int n,
                                             const policy::GenerationConfig& gen) {
    if (n < 2)
        throw std::invalid_argument("sample_candidates: n must be at least 2");
    std::vector<TokenSequence> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        policy::GenerationConfig g = gen;
        g.seed = seeds::derive(gen.seed, "rollout", static_cast<std::uint64_t>(k));
        out.push_back(policy::sample_sequence(params, inst.features(), g));
    }
    return out;
}

BuildResult build_record(const tasks::TaskInstance& inst,
                         const std::vector<TokenSequence>& candidates,
                         const policy::PolicyParams& ref_policy,
                         double margin_threshold) {
    BuildResult result;
    PreferenceRecord rec;
    rec.instance_id = inst.id;
    std::set<TokenSequence> seen;
    for (const auto& c : candidates)
        if (seen.insert(c).second) rec.responses.push_back(c);

    if (rec.responses.size() < 2) {
        result.rejection = RejectReason::TooFewDistinct;
        return result;
    }
    rec.rewards.reserve(rec.responses.size());
    for (const auto& r : rec.responses)
        rec.rewards.push_back({fmt::round_places(tasks::score_response(inst, r).value, 6)});

    bool all_tied = std::all_of(rec.rewards.begin(), rec.rewards.end(),
                                [&](const RewardValue& v) {
                                    return v.value == rec.rewards.front().value;
                                });
    if (all_tied) {
        result.rejection = RejectReason::AllTied;
        return result;
    }
    if (metrics::list_margin(rec.rewards) < margin_threshold) {
        result.rejection = RejectReason::MarginBelowThreshold;
        return result;
    }
    rec.ref_logprobs.reserve(rec.responses.size());
    for (const auto& r : rec.responses)
        rec.ref_logprobs.push_back(
            fmt::round_places(policy::sequence_logprob(ref_policy, inst.features(), r), 9));
    result.record = std::move(rec);
    return result;
}

std::size_t best_of_n(std::span<const RewardValue> rewards) {
    if (rewards.empty())
        throw std::invalid_argument("best_of_n: empty candidate list");
    std::size_t best = 0;
    for (std::size_t i = 1; i < rewards.size(); ++i)
        if (rewards[i].value > rewards[best].value) best = i;
    return best;
}

std::pair<std::size_t, std::size_t> dpo_pair(const PreferenceRecord& record) {
    std::size_t win = 0, lose = 0;
    for (std::size_t i = 1; i < record.rewards.size(); ++i) {
        if (record.rewards[i].value > record.rewards[win].value) win = i;
        if (record.rewards[i].value < record.rewards[lose].value) lose = i;
    }
    return {win, lose};
}

PreferenceDataset build_dataset(const tasks::TaskSet& task_set,
                                const policy::PolicyParams& sampling_policy,
                                const BuildOptions& options) {
    PreferenceDataset ds;
    ds.manifest.seed = options.seed;
    ds.manifest.temperature = options.temperature;
    ds.manifest.list_size = options.n;
    ds.manifest.margin_threshold = options.margin_threshold;
    ds.manifest.task_kind = task_set.kind;
    ds.manifest.tasks_path = options.tasks_path;
    ds.manifest.task_params = task_set.params;
    ds.manifest.instances_total = static_cast<int>(task_set.instances.size());

    for (std::size_t i = 0; i < task_set.instances.size(); ++i) {
        const auto& inst = task_set.instances[i];
        policy::GenerationConfig gen;
        gen.temperature = options.temperature;
        gen.max_length = task_set.response_len();
        gen.seed = seeds::derive(options.seed, "sample", static_cast<std::uint64_t>(i));
        auto candidates = sample_candidates(sampling_policy, inst, options.n, gen);
        ds.manifest.candidates_total += static_cast<long>(candidates.size());
        std::set<TokenSequence> distinct(candidates.begin(), candidates.end());
        ds.manifest.candidates_distinct += static_cast<long>(distinct.size());

        BuildResult r =
            build_record(inst, candidates, sampling_policy, options.margin_threshold);
        if (r.accepted()) {
            ds.records.push_back(std::move(*r.record));
            ++ds.manifest.accepted;
        } else {
            ++ds.manifest.rejected[reject_reason_name(*r.rejection)];
        }
    }
    return ds;
}

namespace {

[[noreturn]] void file_error(const std::string& path, std::size_t line,
                             const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

void validate_record(const PreferenceRecord& rec, const DatasetManifest& manifest,
                     const std::string& path, std::size_t lineno) {
    std::size_t n = rec.responses.size();
    if (n < 2 || rec.rewards.size() != n || rec.ref_logprobs.size() != n)
        file_error(path, lineno, "invariant violated: parallel lists equal length >= 2");
    for (const auto& r : rec.rewards)
        if (!(r.value >= 0.0 && r.value <= 1.0))
            file_error(path, lineno, "invariant violated: rewards in [0,1]");
    std::set<TokenSequence> distinct(rec.responses.begin(), rec.responses.end());
    if (distinct.size() != n)
        file_error(path, lineno, "invariant violated: responses distinct");
    bool all_tied = std::all_of(rec.rewards.begin(), rec.rewards.end(),
                                [&](const RewardValue& v) {
                                    return v.value == rec.rewards.front().value;
                                });
    if (all_tied)
        file_error(path, lineno, "invariant violated: at least one strict reward pair");
    if (metrics::list_margin(rec.rewards) < manifest.margin_threshold)
        file_error(path, lineno, "invariant violated: list_margin >= margin_threshold");

    int vocab = manifest.task_kind == tasks::TaskKind::Grounding
                    ? manifest.task_params.grid_size + 1
                    : manifest.task_params.alphabet_size;
    int len = manifest.task_kind == tasks::TaskKind::Grounding ? 4
                                                               : manifest.task_params.length;
    for (const auto& resp : rec.responses) {
        if (static_cast<int>(resp.tokens.size()) != len)
            file_error(path, lineno, "invariant violated: response length");
        for (int t : resp.tokens)
            if (t < 0 || t >= vocab)
                file_error(path, lineno, "invariant violated: response token in vocabulary");
    }
}

}  // namespace

void write_dataset(const PreferenceDataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_dataset: cannot open " + path);
    const auto& m = dataset.manifest;
    ordered_json manifest;
    manifest["perpo_prefs"] = 1;
    manifest["seed"] = m.seed;
    manifest["n"] = m.list_size;
    manifest["temperature"] = m.temperature;
    manifest["margin_threshold"] = m.margin_threshold;
    manifest["task_kind"] = tasks::kind_name(m.task_kind);
    manifest["tasks_path"] = m.tasks_path;
    if (m.task_kind == tasks::TaskKind::Grounding) {
        manifest["task_params"] = {{"grid_size", m.task_params.grid_size}};
    } else {
        manifest["task_params"] = {{"alphabet_size", m.task_params.alphabet_size},
                                   {"length", m.task_params.length},
                                   {"noise", m.task_params.noise}};
    }
    manifest["instances_total"] = m.instances_total;
    manifest["accepted"] = m.accepted;
    manifest["rejected"] = m.rejected;
    manifest["candidates_total"] = m.candidates_total;
    manifest["candidates_distinct"] = m.candidates_distinct;
    out << manifest.dump() << '\n';

    for (const auto& rec : dataset.records) {
        ordered_json r;
        r["id"] = rec.instance_id;
        auto responses = ordered_json::array();
        for (const auto& resp : rec.responses) responses.push_back(resp.tokens);
        r["responses"] = std::move(responses);
        auto rewards = ordered_json::array();
        for (const auto& v : rec.rewards) rewards.push_back(v.value);
        r["rewards"] = std::move(rewards);
        r["ref_logprobs"] = rec.ref_logprobs;
        out << r.dump() << '\n';
    }
    if (!out)
        throw std::runtime_error("write_dataset: write failed for " + path);
}

PreferenceDataset read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("read_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.empty())
        file_error(path, 1, "missing manifest line");

    PreferenceDataset ds;
    auto& m = ds.manifest;
    try {
        ordered_json j = ordered_json::parse(line);
        if (!j.contains("perpo_prefs") || j["perpo_prefs"].get<int>() != 1)
            file_error(path, 1, "not a perpo preference file");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.list_size = j.at("n").get<int>();
        m.temperature = j.at("temperature").get<double>();
        m.margin_threshold = j.at("margin_threshold").get<double>();
        m.task_kind = tasks::kind_from_name(j.at("task_kind").get<std::string>());
        m.tasks_path = j.at("tasks_path").get<std::string>();
        const auto& p = j.at("task_params");
        if (m.task_kind == tasks::TaskKind::Grounding) {
            m.task_params.grid_size = p.at("grid_size").get<int>();
        } else {
            m.task_params.alphabet_size = p.at("alphabet_size").get<int>();
            m.task_params.length = p.at("length").get<int>();
            m.task_params.noise = p.at("noise").get<double>();
        }
        m.instances_total = j.at("instances_total").get<int>();
        m.accepted = j.at("accepted").get<int>();
        m.rejected = j.at("rejected").get<std::map<std::string, int>>();
        m.candidates_total = j.at("candidates_total").get<long>();
        m.candidates_distinct = j.at("candidates_distinct").get<long>();
    } catch (const nlohmann::json::exception& e) {
        file_error(path, 1, std::string("manifest: ") + e.what());
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        PreferenceRecord rec;
        try {
            ordered_json r = ordered_json::parse(line);
            rec.instance_id = r.at("id").get<int>();
            for (const auto& resp : r.at("responses")) {
                TokenSequence seq;
                seq.tokens = resp.get<std::vector<int>>();
                rec.responses.push_back(std::move(seq));
            }
            for (const auto& v : r.at("rewards")) rec.rewards.push_back({v.get<double>()});
            rec.ref_logprobs = r.at("ref_logprobs").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            file_error(path, lineno, e.what());
        }
        validate_record(rec, m, path, lineno);
        ds.records.push_back(std::move(rec));
    }
    if (static_cast<int>(ds.records.size()) != m.accepted)
        file_error(path, lineno, "record count does not match manifest accepted count");
    int rejected_sum = 0;
    for (const auto& [name, count] : m.rejected) rejected_sum += count;
    if (m.accepted + rejected_sum != m.instances_total)
        file_error(path, 1, "manifest counts inconsistent");
    return ds;
}

}  // namespace perpo::pipeline
