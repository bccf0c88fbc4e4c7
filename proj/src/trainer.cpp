#include "perpo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "perpo/util.hpp"

namespace perpo::trainer {

namespace {

int to_int(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size())
        throw std::invalid_argument("TrainConfig: bad integer for key '" + key + "'");
    return v;
}

double to_double(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size())
        throw std::invalid_argument("TrainConfig: bad number for key '" + key + "'");
    return v;
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("TrainConfig: bad boolean for key '" + key + "'");
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::apply_line(const std::string& key, const std::string& value) {
    if (key == "method") {
        method = objectives::method_from_name(value);
    } else if (key == "beta") {
        beta = to_double(key, value);
    } else if (key == "gamma") {
        gamma = to_double(key, value);
    } else if (key == "learning_rate") {
        learning_rate = to_double(key, value);
    } else if (key == "steps") {
        steps = to_int(key, value);
    } else if (key == "batch_size") {
        batch_size = to_int(key, value);
    } else if (key == "seed") {
        seed = static_cast<std::uint64_t>(std::stoull(value));
    } else if (key == "dataset_path") {
        dataset_path = value;
    } else if (key == "eval_every") {
        eval_every = to_int(key, value);
    } else if (key == "ablate_prompt") {
        ablate_prompt = to_bool(key, value);
    } else {
        throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
    }
}

TrainConfig TrainConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("TrainConfig: cannot open " + path);
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        cfg.apply_line(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0)
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    if (steps < 0)
        throw std::invalid_argument("TrainConfig: steps must be >= 0");
    if (batch_size < 1)
        throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (beta <= 0.0)
        throw std::invalid_argument("TrainConfig: beta must be positive");
    if (gamma < 0.0)
        throw std::invalid_argument("TrainConfig: gamma must be >= 0");
    if (eval_every < 0)
        throw std::invalid_argument("TrainConfig: eval_every must be >= 0");
}

double EvalMetrics::headline() const {
    return kind == tasks::TaskKind::Grounding ? values.at("ap50")
                                              : values.at("mean_ocr_reward");
}

namespace {

// Endless deterministic stream of example indices: a shuffled deck,
// reshuffled every time it runs out.
class BatchStream {
public:
    BatchStream(std::size_t count, std::uint64_t seed) : eng_(seed), deck_(count) {
        std::iota(deck_.begin(), deck_.end(), std::size_t{0});
        rng::shuffle(deck_, eng_);
    }

    std::size_t next() {
        if (pos_ == deck_.size()) {
            rng::shuffle(deck_, eng_);
            pos_ = 0;
        }
        return deck_[pos_++];
    }

private:
    rng::Engine eng_;
    std::vector<std::size_t> deck_;
    std::size_t pos_ = 0;
};

void check_dims(const policy::PolicyParams& params, const tasks::TaskSet& set,
                const char* who) {
    if (params.prompt_dim() != set.feature_dim() || params.vocab_size != set.vocab_size() ||
        params.max_seq_len < set.response_len())
        throw std::runtime_error(std::string(who) +
                                 ": policy dimensions do not match the task set");
}

void maybe_eval(TrainReport& report, const TrainConfig& config,
                const policy::PolicyParams& params, const tasks::TaskSet* eval_set,
                int step_done, int total_steps) {
    if (eval_set == nullptr || config.eval_every <= 0) return;
    if (step_done % config.eval_every == 0 || step_done == total_steps)
        if (report.evals.empty() || report.evals.back().first != step_done)
            report.evals.emplace_back(step_done, evaluate(params, *eval_set));
}

std::vector<double> ablated(const std::vector<double>& features) {
    return std::vector<double>(features.size(), 0.0);
}

}  // namespace

TrainReport train_sft(const TrainConfig& config, const tasks::TaskSet& train_set,
                      const policy::PolicyParams& init, const tasks::TaskSet* eval_set) {
    config.validate();
    if (config.method != Method::SFT)
        throw std::invalid_argument("train_sft: config.method must be sft");
    if (train_set.instances.empty())
        throw std::runtime_error("train_sft: empty training set");
    init.validate();
    check_dims(init, train_set, "train_sft");

    auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.final_params = init;
    auto& params = report.final_params;

    std::vector<TokenSequence> truths;
    truths.reserve(train_set.instances.size());
    for (const auto& inst : train_set.instances) truths.push_back(tasks::truth_tokens(inst));

    BatchStream stream(train_set.instances.size(), seeds::derive(config.seed, "sft-batches"));
    std::vector<double> grad(params.weights.size());
    for (int step = 0; step < config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            std::size_t idx = stream.next();
            const auto& inst = train_set.instances[idx];
            const std::vector<double>& feat =
                config.ablate_prompt ? ablated(inst.features()) : inst.features();
            loss -= policy::sequence_logprob(params, feat, truths[idx]);
            std::vector<double> g = policy::logprob_param_gradient(params, feat, truths[idx]);
            for (std::size_t k = 0; k < grad.size(); ++k) grad[k] -= g[k];
        }
        double inv = 1.0 / static_cast<double>(config.batch_size);
        report.loss_trace.push_back(loss * inv);
        for (std::size_t k = 0; k < grad.size(); ++k)
            params.weights[k] -= config.learning_rate * grad[k] * inv;
        maybe_eval(report, config, params, eval_set, step + 1, config.steps);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {

struct PrefExample {
    const pipeline::PreferenceRecord* record;
    std::vector<double> features;       // ablation already applied
    std::vector<double> ref_logprobs;   // frozen, computed once per response
};

// Loss and logprob-space gradient of one record under the configured
// method. DPO consumes the extreme pair; grads map back to list indices.
objectives::ObjectiveOutput record_loss(const PrefExample& ex,
                                        const policy::PolicyParams& params,
                                        const objectives::ObjectiveConfig& ocfg,
                                        Method method) {
    const auto& rec = *ex.record;
    std::size_t n = rec.responses.size();
    objectives::ScoredList list;
    if (method == Method::DPO) {
        auto [win, lose] = pipeline::dpo_pair(rec);
        for (std::size_t i : {win, lose}) {
            list.policy_logprobs.push_back(
                policy::sequence_logprob(params, ex.features, rec.responses[i]));
            list.ref_logprobs.push_back(ex.ref_logprobs[i]);
            list.disc_rewards.push_back(rec.rewards[i]);
        }
        objectives::ObjectiveOutput pair_out = objectives::dpo_loss(list, ocfg);
        objectives::ObjectiveOutput out;
        out.loss = pair_out.loss;
        out.grad_policy_logprobs.assign(n, 0.0);
        out.grad_policy_logprobs[win] = pair_out.grad_policy_logprobs[0];
        out.grad_policy_logprobs[lose] = pair_out.grad_policy_logprobs[1];
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        list.policy_logprobs.push_back(
            policy::sequence_logprob(params, ex.features, rec.responses[i]));
        list.ref_logprobs.push_back(ex.ref_logprobs[i]);
        list.disc_rewards.push_back(rec.rewards[i]);
    }
    return objectives::evaluate_list(list, ocfg);
}

}  // namespace

TrainReport train_preference(const TrainConfig& config,
                             const pipeline::PreferenceDataset& dataset,
                             const tasks::TaskSet& task_set,
                             const policy::PolicyParams& init,
                             const tasks::TaskSet* eval_set) {
    config.validate();
    if (config.method == Method::SFT)
        throw std::invalid_argument("train_preference: method must be dpo, lipo, or perpo");
    init.validate();
    check_dims(init, task_set, "train_preference");

    auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    report.final_params = init;
    auto& params = report.final_params;
    const policy::PolicyParams ref = init;  // frozen snapshot

    std::map<int, const tasks::TaskInstance*> by_id;
    for (const auto& inst : task_set.instances) by_id[inst.id] = &inst;

    std::vector<PrefExample> examples;
    for (const auto& rec : dataset.records) {
        bool tied = std::all_of(rec.rewards.begin(), rec.rewards.end(),
                                [&](const metrics::RewardValue& v) {
                                    return v.value == rec.rewards.front().value;
                                });
        if (tied) {
            ++report.skipped_tied_records;
            continue;
        }
        auto it = by_id.find(rec.instance_id);
        if (it == by_id.end())
            throw std::runtime_error("train_preference: dataset references unknown instance id " +
                                     std::to_string(rec.instance_id));
        PrefExample ex;
        ex.record = &rec;
        ex.features = config.ablate_prompt ? ablated(it->second->features())
                                           : it->second->features();
        ex.ref_logprobs.reserve(rec.responses.size());
        for (const auto& resp : rec.responses)
            ex.ref_logprobs.push_back(policy::sequence_logprob(ref, ex.features, resp));
        examples.push_back(std::move(ex));
    }
    if (examples.empty())
        throw std::runtime_error("train_preference: no records with a strict reward pair");

    objectives::ObjectiveConfig ocfg;
    ocfg.beta = config.beta;
    ocfg.gamma = config.gamma;
    ocfg.method = config.method;

    BatchStream stream(examples.size(), seeds::derive(config.seed, "pref-batches"));
    std::vector<double> grad(params.weights.size());
    for (int step = 0; step < config.steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double loss = 0.0;
        for (int b = 0; b < config.batch_size; ++b) {
            const PrefExample& ex = examples[stream.next()];
            objectives::ObjectiveOutput out = record_loss(ex, params, ocfg, config.method);
            loss += out.loss;
            for (std::size_t i = 0; i < ex.record->responses.size(); ++i) {
                double gi = out.grad_policy_logprobs[i];
                if (gi == 0.0) continue;
                std::vector<double> g =
                    policy::logprob_param_gradient(params, ex.features, ex.record->responses[i]);
                for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += gi * g[k];
            }
        }
        double inv = 1.0 / static_cast<double>(config.batch_size);
        report.loss_trace.push_back(loss * inv);
        for (std::size_t k = 0; k < grad.size(); ++k)
            params.weights[k] -= config.learning_rate * grad[k] * inv;
        maybe_eval(report, config, params, eval_set, step + 1, config.steps);
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

EvalMetrics evaluate(const policy::PolicyParams& params, const tasks::TaskSet& eval_set) {
    if (eval_set.instances.empty())
        throw std::runtime_error("evaluate: empty evaluation set");
    params.validate();
    check_dims(params, eval_set, "evaluate");

    EvalMetrics out;
    out.kind = eval_set.kind;
    policy::GenerationConfig gen;
    gen.temperature = 0.0;  // greedy
    gen.max_length = eval_set.response_len();

    if (eval_set.kind == tasks::TaskKind::Grounding) {
        std::vector<std::pair<metrics::BoundingBox, metrics::BoundingBox>> pairs;
        double iou_sum = 0.0;
        for (const auto& inst : eval_set.instances) {
            TokenSequence pred = policy::sample_sequence(params, inst.features(), gen);
            const auto& g = std::get<tasks::GroundingInstance>(inst.body);
            metrics::BoundingBox box = tasks::decode_box(pred, g.grid_size);
            pairs.emplace_back(box, g.truth_box);
            iou_sum += metrics::iou(box, g.truth_box).value;
        }
        out.values["ap50"] = metrics::ap_at_50(pairs);
        out.values["mean_iou"] = iou_sum / static_cast<double>(pairs.size());
        return out;
    }

    double edit_sum = 0.0, reward_sum = 0.0, p_sum = 0.0, r_sum = 0.0, f_sum = 0.0,
           bleu_sum = 0.0;
    for (const auto& inst : eval_set.instances) {
        TokenSequence pred = policy::sample_sequence(params, inst.features(), gen);
        const auto& o = std::get<tasks::OcrInstance>(inst.body);
        edit_sum += static_cast<double>(metrics::edit_distance(pred, o.truth_text));
        reward_sum += metrics::ocr_reward(pred, o.truth_text).value;
        metrics::PrfScores prf = metrics::token_prf(pred, o.truth_text);
        p_sum += prf.precision;
        r_sum += prf.recall;
        f_sum += prf.f1;
        bleu_sum += metrics::bleu(pred, o.truth_text);
    }
    double count = static_cast<double>(eval_set.instances.size());
    out.values["mean_edit_dist"] = edit_sum / count;
    out.values["mean_ocr_reward"] = reward_sum / count;
    out.values["precision"] = p_sum / count;
    out.values["recall"] = r_sum / count;
    out.values["f1"] = f_sum / count;
    out.values["bleu"] = bleu_sum / count;
    return out;
}

std::vector<BonRow> bon_sweep(const policy::PolicyParams& params,
                              const tasks::TaskSet& eval_set,
                              const std::vector<int>& n_values,
                              const policy::GenerationConfig& gen) {
    if (n_values.empty())
        throw std::invalid_argument("bon_sweep: n_values must be non-empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] < 1)
            throw std::invalid_argument("bon_sweep: n values must be >= 1");
        if (i > 0 && n_values[i] <= n_values[i - 1])
            throw std::invalid_argument("bon_sweep: n values must be strictly ascending");
    }
    if (eval_set.instances.empty())
        throw std::runtime_error("bon_sweep: empty evaluation set");
    params.validate();
    check_dims(params, eval_set, "bon_sweep");

    int max_n = n_values.back();
    std::vector<std::vector<double>> rewards;  // [instance][rollout]
    rewards.reserve(eval_set.instances.size());
    for (std::size_t i = 0; i < eval_set.instances.size(); ++i) {
        const auto& inst = eval_set.instances[i];
        policy::GenerationConfig g = gen;
        g.max_length = eval_set.response_len();
        std::uint64_t inst_seed = seeds::derive(gen.seed, "bon", static_cast<std::uint64_t>(i));
        std::vector<double> rs;
        rs.reserve(static_cast<std::size_t>(max_n));
        for (int k = 0; k < max_n; ++k) {
            g.seed = seeds::derive(inst_seed, "rollout", static_cast<std::uint64_t>(k));
            TokenSequence y = policy::sample_sequence(params, inst.features(), g);
            rs.push_back(tasks::score_response(inst, y).value);
        }
        rewards.push_back(std::move(rs));
    }

    std::vector<BonRow> table;
    table.reserve(n_values.size());
    for (int n : n_values) {
        BonRow row;
        row.n = n;
        double best_sum = 0.0;
        double hits = 0.0;
        for (const auto& rs : rewards) {
            double best = *std::max_element(rs.begin(), rs.begin() + n);
            best_sum += best;
            if (best >= 0.5) hits += 1.0;
        }
        double count = static_cast<double>(rewards.size());
        row.mean_best_reward = best_sum / count;
        row.ap50_of_best = hits / count;
        table.push_back(row);
    }
    return table;
}

namespace {

tasks::TaskSet make_set(const CompareConfig& cfg, std::uint64_t seed, int count) {
    if (cfg.task_kind == tasks::TaskKind::Grounding)
        return tasks::make_grounding_set(seed, count, cfg.grid_size);
    return tasks::make_ocr_set(seed, count, cfg.alphabet_size, cfg.ocr_length, cfg.ocr_noise);
}

std::string artifact_path(const CompareConfig& cfg, const std::string& name) {
    return cfg.artifacts_dir + "/" + name;
}

}  // namespace

CompareResult compare_methods(const CompareConfig& config) {
    if (config.seeds.empty())
        throw std::invalid_argument("compare_methods: no seeds given");
    if (config.methods.empty() || config.n_values.empty())
        throw std::invalid_argument("compare_methods: methods and n_values must be non-empty");
    for (int n : config.n_values)
        if (n < 2)
            throw std::invalid_argument("compare_methods: n values must be >= 2");
    const bool persist = !config.artifacts_dir.empty();
    if (persist && config.build)
        std::filesystem::create_directories(config.artifacts_dir);

    CompareResult result;
    std::map<std::pair<std::string, int>, std::vector<double>> headline_by_cell;

    for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        std::uint64_t s = config.seeds[si];
        std::string tag = "seed" + std::to_string(s);

        tasks::TaskSet train_set, eval_set;
        if (persist && !config.build) {
            train_set = tasks::read_tasks(artifact_path(config, tag + "_train_tasks.jsonl"));
            eval_set = tasks::read_tasks(artifact_path(config, tag + "_eval_tasks.jsonl"));
        } else {
            train_set = make_set(config, seeds::derive(s, "train-tasks"), config.train_count);
            eval_set = make_set(config, seeds::derive(s, "eval-tasks"), config.eval_count);
            if (persist) {
                tasks::write_tasks(train_set, artifact_path(config, tag + "_train_tasks.jsonl"));
                tasks::write_tasks(eval_set, artifact_path(config, tag + "_eval_tasks.jsonl"));
            }
        }

        policy::PolicyParams sft_params;
        if (persist && !config.build) {
            sft_params = policy::load_policy(artifact_path(config, tag + "_sft_policy.txt"));
        } else {
            TrainConfig sft_cfg = config.sft;
            sft_cfg.method = Method::SFT;
            sft_cfg.seed = seeds::derive(s, "sft");
            policy::PolicyParams init = policy::PolicyParams::zeros(
                train_set.vocab_size(), train_set.feature_dim(), train_set.response_len());
            sft_params = train_sft(sft_cfg, train_set, init).final_params;
            if (persist)
                policy::save_policy(sft_params, artifact_path(config, tag + "_sft_policy.txt"));
        }
        EvalMetrics sft_metrics = evaluate(sft_params, eval_set);

        for (int n : config.n_values) {
            std::string prefs_name = tag + "_prefs_n" + std::to_string(n) + ".jsonl";
            pipeline::PreferenceDataset dataset;
            if (persist && !config.build) {
                dataset = pipeline::read_dataset(artifact_path(config, prefs_name));
            } else {
                pipeline::BuildOptions opts;
                opts.n = n;
                opts.temperature = config.temperature;
                opts.margin_threshold = config.margin_threshold;
                opts.seed = seeds::derive(s, "prefs");
                opts.tasks_path = tag + "_train_tasks.jsonl";
                dataset = pipeline::build_dataset(train_set, sft_params, opts);
                if (persist) pipeline::write_dataset(dataset, artifact_path(config, prefs_name));
            }

            for (Method m : config.methods) {
                EvalMetrics metrics;
                if (m == Method::SFT) {
                    metrics = sft_metrics;
                } else {
                    TrainConfig pref_cfg = config.pref;
                    pref_cfg.method = m;
                    pref_cfg.seed = seeds::derive(s, "pref");
                    TrainReport rep =
                        train_preference(pref_cfg, dataset, train_set, sft_params);
                    metrics = evaluate(rep.final_params, eval_set);
                }
                CompareRow row;
                row.method = objectives::method_name(m);
                row.n = n;
                row.seed = s;
                row.metrics = metrics;
                headline_by_cell[{row.method, n}].push_back(metrics.headline());
                result.rows.push_back(std::move(row));
            }
        }
    }

    for (const auto& [cell, values] : headline_by_cell) {
        double lo = *std::min_element(values.begin(), values.end());
        double hi = *std::max_element(values.begin(), values.end());
        double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
        std::ostringstream line;
        line << "method=" << cell.first << " n=" << cell.second << " headline mean="
             << fmt::g9(mean) << " min=" << fmt::g9(lo) << " max=" << fmt::g9(hi);
        result.summary_lines.push_back(line.str());
    }
    return result;
}

void write_trace_csv(const TrainReport& report, tasks::TaskKind kind,
                     const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("write_trace_csv: cannot open " + path);
    std::vector<std::string> metric_names;
    if (kind == tasks::TaskKind::Grounding) {
        metric_names = {"ap50", "mean_iou"};
    } else {
        metric_names = {"mean_edit_dist", "mean_ocr_reward", "precision", "recall", "f1",
                        "bleu"};
    }
    out << "step,loss";
    for (const auto& name : metric_names) out << ',' << name;
    out << '\n';
    std::size_t next_eval = 0;
    for (std::size_t i = 0; i < report.loss_trace.size(); ++i) {
        int step = static_cast<int>(i) + 1;
        out << step << ',' << fmt::g9(report.loss_trace[i]);
        if (next_eval < report.evals.size() && report.evals[next_eval].first == step) {
            for (const auto& name : metric_names)
                out << ',' << fmt::g9(report.evals[next_eval].second.values.at(name));
            ++next_eval;
        } else {
            for (std::size_t k = 0; k < metric_names.size(); ++k) out << ',';
        }
        out << '\n';
    }
    if (!out)
        throw std::runtime_error("write_trace_csv: write failed for " + path);
}

}  // namespace perpo::trainer
