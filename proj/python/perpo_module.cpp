#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "perpo/metrics.hpp"
#include "perpo/objectives.hpp"
#include "perpo/pipeline.hpp"
#include "perpo/policy.hpp"
#include "perpo/tasks.hpp"
#include "perpo/trainer.hpp"
#include "perpo/util.hpp"

namespace py = pybind11;

using namespace perpo;

namespace {

metrics::TokenSequence to_seq(const std::vector<int>& tokens) {
    metrics::TokenSequence s;
    s.tokens = tokens;
    return s;
}

std::vector<metrics::RewardValue> to_rewards(const std::vector<double>& values) {
    std::vector<metrics::RewardValue> out;
    out.reserve(values.size());
    for (double v : values) out.push_back({v});
    return out;
}

objectives::ScoredList to_list(const std::vector<double>& policy_lps,
                               const std::vector<double>& ref_lps,
                               const std::vector<double>& rewards) {
    objectives::ScoredList s;
    s.policy_logprobs = policy_lps;
    s.ref_logprobs = ref_lps;
    s.disc_rewards = to_rewards(rewards);
    return s;
}

py::dict metrics_dict(const trainer::EvalMetrics& m) {
    py::dict d;
    d["kind"] = tasks::kind_name(m.kind);
    for (const auto& [name, value] : m.values) d[name.c_str()] = value;
    return d;
}

}  // namespace

PYBIND11_MODULE(perpo, m) {
    m.doc() = "Perceptual preference optimization laboratory";

    py::class_<metrics::BoundingBox>(m, "BoundingBox")
        .def(py::init<double, double, double, double>(), py::arg("x_min"), py::arg("y_min"),
             py::arg("x_max"), py::arg("y_max"))
        .def_readwrite("x_min", &metrics::BoundingBox::x_min)
        .def_readwrite("y_min", &metrics::BoundingBox::y_min)
        .def_readwrite("x_max", &metrics::BoundingBox::x_max)
        .def_readwrite("y_max", &metrics::BoundingBox::y_max)
        .def("area", &metrics::BoundingBox::area)
        .def("valid", &metrics::BoundingBox::valid);

    m.def("iou", [](const metrics::BoundingBox& a, const metrics::BoundingBox& b) {
        return metrics::iou(a, b).value;
    });
    m.def("edit_distance", [](const std::vector<int>& a, const std::vector<int>& b) {
        return metrics::edit_distance(to_seq(a), to_seq(b));
    });
    m.def("edit_distance_str", [](const std::string& a, const std::string& b) {
        return metrics::edit_distance(metrics::TokenSequence::from_text(a),
                                      metrics::TokenSequence::from_text(b));
    });
    m.def("ocr_reward", [](const std::vector<int>& pred, const std::vector<int>& truth) {
        return metrics::ocr_reward(to_seq(pred), to_seq(truth)).value;
    });
    m.def("ocr_reward_str", [](const std::string& pred, const std::string& truth) {
        return metrics::ocr_reward(metrics::TokenSequence::from_text(pred),
                                   metrics::TokenSequence::from_text(truth))
            .value;
    });
    m.def("token_prf", [](const std::vector<int>& pred, const std::vector<int>& truth) {
        metrics::PrfScores s = metrics::token_prf(to_seq(pred), to_seq(truth));
        return py::make_tuple(s.precision, s.recall, s.f1);
    });
    m.def("bleu", [](const std::vector<int>& pred, const std::vector<int>& truth) {
        return metrics::bleu(to_seq(pred), to_seq(truth));
    });
    m.def("list_margin", [](const std::vector<double>& rewards) {
        auto rv = to_rewards(rewards);
        return metrics::list_margin(rv);
    });

    m.def(
        "margin_weights",
        [](const std::vector<double>& rewards, double gamma) {
            auto rv = to_rewards(rewards);
            py::dict d;
            for (const auto& [key, w] : objectives::margin_weights(rv, gamma))
                d[py::make_tuple(key.first, key.second)] = w;
            return d;
        },
        py::arg("rewards"), py::arg("gamma"));

    auto loss_binding = [](objectives::ObjectiveOutput out) {
        return py::make_tuple(out.loss, out.grad_policy_logprobs);
    };
    m.def(
        "dpo_loss",
        [loss_binding](const std::vector<double>& policy_lps,
                       const std::vector<double>& ref_lps, const std::vector<double>& rewards,
                       double beta) {
            objectives::ObjectiveConfig cfg;
            cfg.beta = beta;
            cfg.method = objectives::Method::DPO;
            return loss_binding(objectives::dpo_loss(to_list(policy_lps, ref_lps, rewards), cfg));
        },
        py::arg("policy_logprobs"), py::arg("ref_logprobs"), py::arg("rewards"),
        py::arg("beta") = 0.1);
    m.def(
        "lipo_loss",
        [loss_binding](const std::vector<double>& policy_lps,
                       const std::vector<double>& ref_lps, const std::vector<double>& rewards,
                       double beta) {
            objectives::ObjectiveConfig cfg;
            cfg.beta = beta;
            cfg.method = objectives::Method::LIPO;
            return loss_binding(
                objectives::lipo_loss(to_list(policy_lps, ref_lps, rewards), cfg));
        },
        py::arg("policy_logprobs"), py::arg("ref_logprobs"), py::arg("rewards"),
        py::arg("beta") = 0.1);
    m.def(
        "perpo_loss",
        [loss_binding](const std::vector<double>& policy_lps,
                       const std::vector<double>& ref_lps, const std::vector<double>& rewards,
                       double beta, double gamma) {
            objectives::ObjectiveConfig cfg;
            cfg.beta = beta;
            cfg.gamma = gamma;
            cfg.method = objectives::Method::PERPO;
            return loss_binding(
                objectives::perpo_loss(to_list(policy_lps, ref_lps, rewards), cfg));
        },
        py::arg("policy_logprobs"), py::arg("ref_logprobs"), py::arg("rewards"),
        py::arg("beta") = 0.1, py::arg("gamma") = 0.5);
    m.def(
        "perpo_erm_value",
        [](const std::vector<double>& policy_lps, const std::vector<double>& ref_lps,
           const std::vector<double>& rewards, double beta) {
            objectives::ObjectiveConfig cfg;
            cfg.beta = beta;
            return objectives::perpo_erm_value(to_list(policy_lps, ref_lps, rewards), cfg);
        },
        py::arg("policy_logprobs"), py::arg("ref_logprobs"), py::arg("rewards"),
        py::arg("beta") = 0.1);
    m.def("log_sigmoid", &objectives::log_sigmoid);

    py::class_<policy::PolicyParams>(m, "PolicyParams")
        .def_static("zeros", &policy::PolicyParams::zeros, py::arg("vocab_size"),
                    py::arg("prompt_dim"), py::arg("max_seq_len"))
        .def_readwrite("vocab_size", &policy::PolicyParams::vocab_size)
        .def_readwrite("feature_dim", &policy::PolicyParams::feature_dim)
        .def_readwrite("max_seq_len", &policy::PolicyParams::max_seq_len)
        .def_readwrite("weights", &policy::PolicyParams::weights)
        .def("prompt_dim", &policy::PolicyParams::prompt_dim);

    m.def("save_policy", &policy::save_policy, py::arg("params"), py::arg("path"));
    m.def("load_policy", &policy::load_policy, py::arg("path"));
    m.def(
        "sequence_logprob",
        [](const policy::PolicyParams& p, const std::vector<double>& features,
           const std::vector<int>& tokens) {
            return policy::sequence_logprob(p, features, to_seq(tokens));
        },
        py::arg("params"), py::arg("prompt_features"), py::arg("tokens"));
    m.def(
        "sample_sequence",
        [](const policy::PolicyParams& p, const std::vector<double>& features,
           double temperature, int max_length, std::uint64_t seed) {
            policy::GenerationConfig gen;
            gen.temperature = temperature;
            gen.max_length = max_length;
            gen.seed = seed;
            return policy::sample_sequence(p, features, gen).tokens;
        },
        py::arg("params"), py::arg("prompt_features"), py::arg("temperature"),
        py::arg("max_length"), py::arg("seed"));
    m.def(
        "logprob_param_gradient",
        [](const policy::PolicyParams& p, const std::vector<double>& features,
           const std::vector<int>& tokens) {
            return policy::logprob_param_gradient(p, features, to_seq(tokens));
        },
        py::arg("params"), py::arg("prompt_features"), py::arg("tokens"));

    py::class_<tasks::TaskSet>(m, "TaskSet")
        .def("__len__", [](const tasks::TaskSet& s) { return s.instances.size(); })
        .def_property_readonly("kind",
                               [](const tasks::TaskSet& s) { return tasks::kind_name(s.kind); })
        .def_property_readonly("seed", [](const tasks::TaskSet& s) { return s.seed; })
        .def("vocab_size", &tasks::TaskSet::vocab_size)
        .def("response_len", &tasks::TaskSet::response_len)
        .def("feature_dim", &tasks::TaskSet::feature_dim)
        .def("features",
             [](const tasks::TaskSet& s, std::size_t i) {
                 return s.instances.at(i).features();
             })
        .def("truth_tokens",
             [](const tasks::TaskSet& s, std::size_t i) {
                 return tasks::truth_tokens(s.instances.at(i)).tokens;
             })
        .def("score", [](const tasks::TaskSet& s, std::size_t i,
                         const std::vector<int>& tokens) {
            return tasks::score_response(s.instances.at(i), to_seq(tokens)).value;
        });

    m.def("make_grounding_set", &tasks::make_grounding_set, py::arg("seed"), py::arg("count"),
          py::arg("grid_size"));
    m.def("make_ocr_set", &tasks::make_ocr_set, py::arg("seed"), py::arg("count"),
          py::arg("alphabet_size"), py::arg("length"), py::arg("noise"));
    m.def("write_tasks", &tasks::write_tasks, py::arg("task_set"), py::arg("path"));
    m.def("read_tasks", &tasks::read_tasks, py::arg("path"));

    py::class_<pipeline::PreferenceRecord>(m, "PreferenceRecord")
        .def_readonly("instance_id", &pipeline::PreferenceRecord::instance_id)
        .def_property_readonly("responses",
                               [](const pipeline::PreferenceRecord& r) {
                                   std::vector<std::vector<int>> out;
                                   for (const auto& resp : r.responses)
                                       out.push_back(resp.tokens);
                                   return out;
                               })
        .def_property_readonly("rewards",
                               [](const pipeline::PreferenceRecord& r) {
                                   std::vector<double> out;
                                   for (const auto& v : r.rewards) out.push_back(v.value);
                                   return out;
                               })
        .def_readonly("ref_logprobs", &pipeline::PreferenceRecord::ref_logprobs);

    py::class_<pipeline::PreferenceDataset>(m, "PreferenceDataset")
        .def("__len__",
             [](const pipeline::PreferenceDataset& d) { return d.records.size(); })
        .def("record",
             [](const pipeline::PreferenceDataset& d, std::size_t i) {
                 return d.records.at(i);
             })
        .def_property_readonly("accepted",
                               [](const pipeline::PreferenceDataset& d) {
                                   return d.manifest.accepted;
                               })
        .def_property_readonly("rejected",
                               [](const pipeline::PreferenceDataset& d) {
                                   return d.manifest.rejected;
                               })
        .def_property_readonly("list_size", [](const pipeline::PreferenceDataset& d) {
            return d.manifest.list_size;
        });

    m.def(
        "build_dataset",
        [](const tasks::TaskSet& set, const policy::PolicyParams& params, int n,
           double temperature, double margin_threshold, std::uint64_t seed,
           const std::string& tasks_path) {
            pipeline::BuildOptions opts;
            opts.n = n;
            opts.temperature = temperature;
            opts.margin_threshold = margin_threshold;
            opts.seed = seed;
            opts.tasks_path = tasks_path;
            return pipeline::build_dataset(set, params, opts);
        },
        py::arg("task_set"), py::arg("params"), py::arg("n") = 20,
        py::arg("temperature") = 0.5, py::arg("margin_threshold") = 0.8, py::arg("seed") = 0,
        py::arg("tasks_path") = "");
    m.def("write_dataset", &pipeline::write_dataset, py::arg("dataset"), py::arg("path"));
    m.def("read_dataset", &pipeline::read_dataset, py::arg("path"));
    m.def("best_of_n", [](const std::vector<double>& rewards) {
        auto rv = to_rewards(rewards);
        return pipeline::best_of_n(rv);
    });
    m.def("dpo_pair", &pipeline::dpo_pair);

    py::class_<trainer::TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_property(
            "method",
            [](const trainer::TrainConfig& c) { return objectives::method_name(c.method); },
            [](trainer::TrainConfig& c, const std::string& name) {
                c.method = objectives::method_from_name(name);
            })
        .def_readwrite("beta", &trainer::TrainConfig::beta)
        .def_readwrite("gamma", &trainer::TrainConfig::gamma)
        .def_readwrite("learning_rate", &trainer::TrainConfig::learning_rate)
        .def_readwrite("steps", &trainer::TrainConfig::steps)
        .def_readwrite("batch_size", &trainer::TrainConfig::batch_size)
        .def_readwrite("seed", &trainer::TrainConfig::seed)
        .def_readwrite("eval_every", &trainer::TrainConfig::eval_every)
        .def_readwrite("ablate_prompt", &trainer::TrainConfig::ablate_prompt);

    py::class_<trainer::TrainReport>(m, "TrainReport")
        .def_readonly("loss_trace", &trainer::TrainReport::loss_trace)
        .def_readonly("final_params", &trainer::TrainReport::final_params)
        .def_readonly("skipped_tied_records", &trainer::TrainReport::skipped_tied_records)
        .def_readonly("wall_seconds", &trainer::TrainReport::wall_seconds);

    m.def(
        "train_sft",
        [](const trainer::TrainConfig& cfg, const tasks::TaskSet& train_set,
           const policy::PolicyParams& init) { return trainer::train_sft(cfg, train_set, init); },
        py::arg("config"), py::arg("train_set"), py::arg("init"));
    m.def(
        "train_preference",
        [](const trainer::TrainConfig& cfg, const pipeline::PreferenceDataset& ds,
           const tasks::TaskSet& task_set, const policy::PolicyParams& init) {
            return trainer::train_preference(cfg, ds, task_set, init);
        },
        py::arg("config"), py::arg("dataset"), py::arg("task_set"), py::arg("init"));
    m.def(
        "evaluate",
        [](const policy::PolicyParams& params, const tasks::TaskSet& eval_set) {
            return metrics_dict(trainer::evaluate(params, eval_set));
        },
        py::arg("params"), py::arg("eval_set"));
    m.def(
        "bon_sweep",
        [](const policy::PolicyParams& params, const tasks::TaskSet& eval_set,
           const std::vector<int>& n_values, double temperature, std::uint64_t seed) {
            policy::GenerationConfig gen;
            gen.temperature = temperature;
            gen.max_length = eval_set.response_len();
            gen.seed = seed;
            std::vector<py::tuple> rows;
            for (const auto& row : trainer::bon_sweep(params, eval_set, n_values, gen))
                rows.push_back(py::make_tuple(row.n, row.mean_best_reward, row.ap50_of_best));
            return rows;
        },
        py::arg("params"), py::arg("eval_set"), py::arg("n_values"),
        py::arg("temperature") = 0.5, py::arg("seed") = 0);

    m.def(
        "derive_seed",
        [](std::uint64_t root, const std::string& tag) { return seeds::derive(root, tag); },
        py::arg("root"), py::arg("tag"));
}
