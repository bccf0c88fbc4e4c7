#include "perpo/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "perpo/pipeline.hpp"
#include "perpo/policy.hpp"
#include "perpo/profiles.hpp"
#include "perpo/tasks.hpp"
#include "perpo/trainer.hpp"
#include "perpo/util.hpp"

namespace perpo::cli {

namespace {

namespace fs = std::filesystem;

/// Default outputs land in $PERPO_OUT_DIR when it is set; explicit --out
/// paths are used verbatim.
std::string default_out(const std::string& name) {
    const char* dir = std::getenv("PERPO_OUT_DIR");
    if (dir != nullptr && *dir != '\0') return std::string(dir) + "/" + name;
    return name;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path))
        throw std::runtime_error(what + " not found: " + path);
}

policy::PolicyParams policy_for(const tasks::TaskSet& set, const std::string& path) {
    if (path.empty())
        return policy::PolicyParams::zeros(set.vocab_size(), set.feature_dim(),
                                           set.response_len());
    require_file(path, "policy file");
    return policy::load_policy(path);
}

void check_policy_matches(const policy::PolicyParams& params, const tasks::TaskSet& set) {
    if (params.prompt_dim() != set.feature_dim() || params.vocab_size != set.vocab_size() ||
        params.max_seq_len < set.response_len())
        throw std::runtime_error("policy dimensions do not match the task set");
}

std::vector<std::string> metric_columns(tasks::TaskKind kind) {
    if (kind == tasks::TaskKind::Grounding) return {"ap50", "mean_iou"};
    return {"mean_edit_dist", "mean_ocr_reward", "precision", "recall", "f1", "bleu"};
}

struct GenTasksOpts {
    std::string task;
    int count = 0;
    std::uint64_t seed = 0;
    std::string out;
    int grid = 8;
    int alphabet = 6;
    int length = 6;
    double noise = 0.25;
};

struct BuildPrefsOpts {
    std::string tasks;
    std::string policy;
    int n = 20;
    double temperature = 0.5;
    double margin = 0.8;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainOpts {
    std::string method;
    std::string tasks;
    std::string prefs;
    std::string config;
    std::string init;
    std::string eval_tasks;
    std::string out;
    std::string trace;
    double beta = 0.1;
    double gamma = 0.5;
    double lr = 0.05;
    int steps = 500;
    int batch = 8;
    std::uint64_t seed = 0;
    int eval_every = 0;
    bool ablate_prompt = false;
};

struct EvalOpts {
    std::string policy;
    std::string tasks;
    std::string out;
};

struct BonOpts {
    std::string policy;
    std::string tasks;
    std::vector<int> n_values{1, 2, 4, 8, 20};
    std::uint64_t seed = 0;
    double temperature = 0.5;
    std::string out;
};

struct CompareOpts {
    std::vector<std::string> methods{"sft", "dpo", "perpo"};
    std::vector<int> n_values{2, 4, 8};
    std::vector<std::uint64_t> seeds;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool build = false;
    std::string profile = "default";
    int grid = 0;
    int train_count = 0;
    int eval_count = 0;
    int sft_steps = 0;
    int pref_steps = 0;
    double margin = -1.0;
    double temperature = -1.0;
};

void run_gen_tasks(const GenTasksOpts& o, const CLI::App& sub) {
    tasks::TaskKind kind = tasks::kind_from_name(o.task);
    if (kind == tasks::TaskKind::Grounding) {
        for (const char* flag : {"--alphabet", "--length", "--noise"})
            if (sub.count(flag) > 0)
                throw CLI::ValidationError("gen-tasks",
                                           std::string(flag) + " applies to --task ocr only");
    } else {
        if (sub.count("--grid") > 0)
            throw CLI::ValidationError("gen-tasks", "--grid applies to --task grounding only");
    }
    std::string out = o.out.empty() ? default_out("tasks.jsonl") : o.out;
    tasks::TaskSet set = kind == tasks::TaskKind::Grounding
                             ? tasks::make_grounding_set(o.seed, o.count, o.grid)
                             : tasks::make_ocr_set(o.seed, o.count, o.alphabet, o.length,
                                                   o.noise);
    tasks::write_tasks(set, out);
    std::cout << "wrote " << set.instances.size() << " " << tasks::kind_name(kind)
              << " tasks (seed " << o.seed << ") to " << out << "\n";
}

void run_build_prefs(const BuildPrefsOpts& o) {
    require_file(o.tasks, "tasks file");
    tasks::TaskSet set = tasks::read_tasks(o.tasks);
    policy::PolicyParams params = policy_for(set, o.policy);
    check_policy_matches(params, set);

    pipeline::BuildOptions opts;
    opts.n = o.n;
    opts.temperature = o.temperature;
    opts.margin_threshold = o.margin;
    opts.seed = o.seed;
    opts.tasks_path = o.tasks;
    pipeline::PreferenceDataset ds = pipeline::build_dataset(set, params, opts);
    std::string out = o.out.empty() ? default_out("prefs.jsonl") : o.out;
    pipeline::write_dataset(ds, out);

    std::cout << "accepted " << ds.manifest.accepted << " of " << ds.manifest.instances_total
              << " instances to " << out;
    if (!ds.manifest.rejected.empty()) {
        std::cout << " (rejected:";
        for (const auto& [name, count] : ds.manifest.rejected)
            std::cout << " " << name << "=" << count;
        std::cout << ")";
    }
    std::cout << "\n";
}

trainer::TrainConfig assemble_train_config(const TrainOpts& o, const CLI::App& sub) {
    trainer::TrainConfig cfg;
    if (!o.config.empty()) {
        require_file(o.config, "config file");
        cfg = trainer::TrainConfig::from_file(o.config);
    }
    cfg.method = objectives::method_from_name(o.method);
    if (sub.count("--beta") > 0) cfg.beta = o.beta;
    if (sub.count("--gamma") > 0) cfg.gamma = o.gamma;
    if (sub.count("--lr") > 0) cfg.learning_rate = o.lr;
    if (sub.count("--steps") > 0) cfg.steps = o.steps;
    if (sub.count("--batch") > 0) cfg.batch_size = o.batch;
    if (sub.count("--seed") > 0) cfg.seed = o.seed;
    if (sub.count("--eval-every") > 0) cfg.eval_every = o.eval_every;
    if (sub.count("--ablate-prompt") > 0) cfg.ablate_prompt = o.ablate_prompt;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("train", e.what());
    }
    return cfg;
}

void run_train(const TrainOpts& o, const CLI::App& sub) {
    bool is_sft = o.method == "sft";
    if (is_sft && o.tasks.empty())
        throw CLI::ValidationError("train", "--method sft requires --tasks");
    if (!is_sft && o.prefs.empty())
        throw CLI::ValidationError("train", "--method " + o.method + " requires --prefs");
    if (is_sft && !o.prefs.empty())
        throw CLI::ValidationError("train", "--method sft does not take --prefs");
    trainer::TrainConfig cfg = assemble_train_config(o, sub);

    std::string out = o.out.empty() ? default_out("policy.txt") : o.out;
    std::string trace = o.trace.empty() ? default_out("trace.csv") : o.trace;

    tasks::TaskSet eval_set;
    const tasks::TaskSet* eval_ptr = nullptr;
    if (!o.eval_tasks.empty()) {
        require_file(o.eval_tasks, "eval tasks file");
        eval_set = tasks::read_tasks(o.eval_tasks);
        eval_ptr = &eval_set;
    }

    trainer::TrainReport report;
    tasks::TaskKind kind;
    if (is_sft) {
        require_file(o.tasks, "tasks file");
        tasks::TaskSet train_set = tasks::read_tasks(o.tasks);
        kind = train_set.kind;
        policy::PolicyParams init = policy_for(train_set, o.init);
        report = trainer::train_sft(cfg, train_set, init, eval_ptr);
    } else {
        require_file(o.prefs, "preference dataset");
        cfg.dataset_path = o.prefs;
        pipeline::PreferenceDataset ds = pipeline::read_dataset(o.prefs);
        std::string tasks_path = o.tasks.empty() ? ds.manifest.tasks_path : o.tasks;
        require_file(tasks_path, "tasks file");
        tasks::TaskSet task_set = tasks::read_tasks(tasks_path);
        kind = task_set.kind;
        policy::PolicyParams init = policy_for(task_set, o.init);
        report = trainer::train_preference(cfg, ds, task_set, init, eval_ptr);
    }
    policy::save_policy(report.final_params, out);
    trainer::write_trace_csv(report, kind, trace);

    std::cout << "trained method=" << o.method << " steps=" << cfg.steps << " to " << out
              << "\n";
    if (!report.loss_trace.empty())
        std::cout << "final loss " << fmt::g9(report.loss_trace.back()) << "\n";
    if (report.skipped_tied_records > 0)
        std::cout << "skipped " << report.skipped_tied_records << " all-tied records\n";
    if (!report.evals.empty())
        std::cout << "final eval headline " << fmt::g9(report.evals.back().second.headline())
                  << "\n";
}

void run_eval(const EvalOpts& o) {
    require_file(o.policy, "policy file");
    require_file(o.tasks, "tasks file");
    tasks::TaskSet set = tasks::read_tasks(o.tasks);
    policy::PolicyParams params = policy::load_policy(o.policy);
    check_policy_matches(params, set);
    trainer::EvalMetrics m = trainer::evaluate(params, set);

    std::string out = o.out.empty() ? default_out("eval.csv") : o.out;
    std::ofstream f(out, std::ios::binary);
    if (!f)
        throw std::runtime_error("eval: cannot open " + out);
    f << "metric,value\n";
    for (const auto& [name, value] : m.values) f << name << ',' << fmt::g9(value) << '\n';
    f << "combined,";
    bool first = true;
    for (const auto& [name, value] : m.values) {
        if (!first) f << ';';
        f << name << '=' << fmt::g9(value);
        first = false;
    }
    f << '\n';
    if (!f)
        throw std::runtime_error("eval: write failed for " + out);

    std::string headline_name =
        m.kind == tasks::TaskKind::Grounding ? "ap50" : "mean_ocr_reward";
    std::cout << headline_name << " " << fmt::g9(m.headline()) << " (" << out << ")\n";
}

void run_bon_sweep(const BonOpts& o) {
    if (o.n_values.empty())
        throw CLI::ValidationError("bon-sweep", "--n-values must be non-empty");
    for (std::size_t i = 0; i < o.n_values.size(); ++i) {
        if (o.n_values[i] < 1)
            throw CLI::ValidationError("bon-sweep", "--n-values entries must be >= 1");
        if (i > 0 && o.n_values[i] <= o.n_values[i - 1])
            throw CLI::ValidationError("bon-sweep", "--n-values must be strictly ascending");
    }
    require_file(o.policy, "policy file");
    require_file(o.tasks, "tasks file");
    tasks::TaskSet set = tasks::read_tasks(o.tasks);
    policy::PolicyParams params = policy::load_policy(o.policy);
    check_policy_matches(params, set);

    policy::GenerationConfig gen;
    gen.temperature = o.temperature;
    gen.max_length = set.response_len();
    gen.seed = o.seed;
    std::vector<trainer::BonRow> table = trainer::bon_sweep(params, set, o.n_values, gen);

    std::string out = o.out.empty() ? default_out("bon.csv") : o.out;
    std::ofstream f(out, std::ios::binary);
    if (!f)
        throw std::runtime_error("bon-sweep: cannot open " + out);
    f << "n,mean_best_reward,ap50_of_best\n";
    for (const auto& row : table)
        f << row.n << ',' << fmt::g9(row.mean_best_reward) << ','
          << fmt::g9(row.ap50_of_best) << '\n';
    if (!f)
        throw std::runtime_error("bon-sweep: write failed for " + out);
    for (const auto& row : table)
        std::cout << "n=" << row.n << " mean_best_reward=" << fmt::g9(row.mean_best_reward)
                  << " ap50_of_best=" << fmt::g9(row.ap50_of_best) << "\n";
    std::cout << "wrote " << out << "\n";
}

void run_compare(const CompareOpts& o, const CLI::App& sub) {
    profiles::GroundingProfile profile;
    if (o.profile == "default") {
        profile = profiles::default_grounding();
    } else if (o.profile == "fast") {
        profile = profiles::fast_grounding();
    } else {
        throw CLI::ValidationError("compare", "--profile must be 'default' or 'fast'");
    }
    trainer::CompareConfig cfg = profiles::compare_config_from(profile, o.seed);
    cfg.methods.clear();
    for (const auto& name : o.methods) {
        try {
            cfg.methods.push_back(objectives::method_from_name(name));
        } catch (const std::invalid_argument& e) {
            throw CLI::ValidationError("compare", e.what());
        }
    }
    cfg.n_values = o.n_values;
    for (std::size_t i = 0; i < cfg.n_values.size(); ++i) {
        if (cfg.n_values[i] < 2)
            throw CLI::ValidationError("compare", "--n-values entries must be >= 2");
        if (i > 0 && cfg.n_values[i] <= cfg.n_values[i - 1])
            throw CLI::ValidationError("compare", "--n-values must be strictly ascending");
    }
    if (!o.seeds.empty()) cfg.seeds = o.seeds;
    if (sub.count("--grid") > 0) cfg.grid_size = o.grid;
    if (sub.count("--train-count") > 0) cfg.train_count = o.train_count;
    if (sub.count("--eval-count") > 0) cfg.eval_count = o.eval_count;
    if (sub.count("--sft-steps") > 0) cfg.sft.steps = o.sft_steps;
    if (sub.count("--pref-steps") > 0) cfg.pref.steps = o.pref_steps;
    if (sub.count("--margin") > 0) cfg.margin_threshold = o.margin;
    if (sub.count("--temperature") > 0) cfg.temperature = o.temperature;

    std::string out_dir = o.out_dir.empty() ? default_out("compare") : o.out_dir;
    cfg.artifacts_dir = out_dir + "/artifacts";
    cfg.build = o.build;
    if (!o.build) {
        // Prerequisites must already exist; name the first missing one.
        for (std::uint64_t s : cfg.seeds) {
            std::string tag = cfg.artifacts_dir + "/seed" + std::to_string(s);
            for (const std::string& path :
                 {tag + "_train_tasks.jsonl", tag + "_eval_tasks.jsonl",
                  tag + "_sft_policy.txt"})
                require_file(path, "compare prerequisite (rerun with --build)");
            for (int n : cfg.n_values)
                require_file(tag + "_prefs_n" + std::to_string(n) + ".jsonl",
                             "compare prerequisite (rerun with --build)");
        }
    }
    fs::create_directories(out_dir);
    trainer::CompareResult result = trainer::compare_methods(cfg);

    std::string csv_path = out_dir + "/comparison.csv";
    std::ofstream f(csv_path, std::ios::binary);
    if (!f)
        throw std::runtime_error("compare: cannot open " + csv_path);
    std::vector<std::string> cols = metric_columns(cfg.task_kind);
    f << "method,n,seed";
    for (const auto& c : cols) f << ',' << c;
    f << '\n';
    for (const auto& row : result.rows) {
        f << row.method << ',' << row.n << ',' << row.seed;
        for (const auto& c : cols) f << ',' << fmt::g9(row.metrics.values.at(c));
        f << '\n';
    }
    if (!f)
        throw std::runtime_error("compare: write failed for " + csv_path);

    std::string summary_path = out_dir + "/summary.txt";
    std::ofstream sf(summary_path, std::ios::binary);
    if (!sf)
        throw std::runtime_error("compare: cannot open " + summary_path);
    for (const auto& line : result.summary_lines) sf << line << '\n';
    if (!sf)
        throw std::runtime_error("compare: write failed for " + summary_path);

    for (const auto& line : result.summary_lines) std::cout << line << "\n";
    std::cout << "wrote " << result.rows.size() << " rows to " << csv_path << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Perceptual preference optimization laboratory"};
    app.name("perpo");
    app.require_subcommand(1);

    GenTasksOpts gt;
    CLI::App* gen_tasks = app.add_subcommand("gen-tasks", "Generate a synthetic task set");
    gen_tasks->add_option("--task", gt.task, "Task kind: grounding or ocr")
        ->required()
        ->check(CLI::IsMember({"grounding", "ocr"}));
    gen_tasks->add_option("--count", gt.count, "Number of instances")
        ->required()
        ->check(CLI::PositiveNumber);
    gen_tasks->add_option("--seed", gt.seed, "Generation seed");
    gen_tasks->add_option("--out", gt.out, "Output tasks file");
    gen_tasks->add_option("--grid", gt.grid, "Grounding grid size")
        ->check(CLI::Range(4, 64));
    gen_tasks->add_option("--alphabet", gt.alphabet, "OCR alphabet size")
        ->check(CLI::Range(2, 26));
    gen_tasks->add_option("--length", gt.length, "OCR string length")
        ->check(CLI::PositiveNumber);
    gen_tasks->add_option("--noise", gt.noise, "OCR feature noise scale")
        ->check(CLI::NonNegativeNumber);
    gen_tasks->callback([&]() { run_gen_tasks(gt, *gen_tasks); });

    BuildPrefsOpts bp;
    CLI::App* build_prefs =
        app.add_subcommand("build-prefs", "Sample rollouts and build a preference dataset");
    build_prefs->add_option("--tasks", bp.tasks, "Tasks file")->required();
    build_prefs->add_option("--policy", bp.policy,
                            "Sampling policy file (default: zero-initialized)");
    build_prefs->add_option("--n", bp.n, "Rollouts per instance")->check(CLI::Range(2, 1024));
    build_prefs->add_option("--temperature", bp.temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber);
    build_prefs->add_option("--margin", bp.margin, "Margin threshold")
        ->check(CLI::NonNegativeNumber);
    build_prefs->add_option("--seed", bp.seed, "Sampling seed");
    build_prefs->add_option("--out", bp.out, "Output dataset file");
    build_prefs->callback([&]() { run_build_prefs(bp); });

    TrainOpts tr;
    CLI::App* train = app.add_subcommand("train", "Train a policy");
    train->add_option("--method", tr.method, "sft, dpo, lipo, or perpo")
        ->required()
        ->check(CLI::IsMember({"sft", "dpo", "lipo", "perpo"}));
    train->add_option("--tasks", tr.tasks, "Tasks file (sft; optional for others)");
    train->add_option("--prefs", tr.prefs, "Preference dataset (dpo/lipo/perpo)");
    train->add_option("--config", tr.config, "key=value config file");
    train->add_option("--init", tr.init, "Initial policy file (default: zeros)");
    train->add_option("--eval-tasks", tr.eval_tasks, "Evaluation tasks file");
    train->add_option("--out", tr.out, "Output policy file");
    train->add_option("--trace", tr.trace, "Output trace CSV");
    train->add_option("--beta", tr.beta, "Preference beta");
    train->add_option("--gamma", tr.gamma, "Margin-weight gamma");
    train->add_option("--lr", tr.lr, "Learning rate");
    train->add_option("--steps", tr.steps, "Training steps");
    train->add_option("--batch", tr.batch, "Batch size");
    train->add_option("--seed", tr.seed, "Training seed");
    train->add_option("--eval-every", tr.eval_every, "Evaluation cadence in steps");
    train->add_flag("--ablate-prompt", tr.ablate_prompt, "Zero prompt features in training");
    train->callback([&]() { run_train(tr, *train); });

    EvalOpts ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a policy on a task set");
    eval_cmd->add_option("--policy", ev.policy, "Policy file")->required();
    eval_cmd->add_option("--tasks", ev.tasks, "Tasks file")->required();
    eval_cmd->add_option("--out", ev.out, "Output metrics CSV");
    eval_cmd->callback([&]() { run_eval(ev); });

    BonOpts bo;
    CLI::App* bon = app.add_subcommand("bon-sweep", "Best-of-N reward sweep");
    bon->add_option("--policy", bo.policy, "Policy file")->required();
    bon->add_option("--tasks", bo.tasks, "Tasks file")->required();
    bon->add_option("--n-values", bo.n_values, "Ascending N values");
    bon->add_option("--seed", bo.seed, "Sampling seed");
    bon->add_option("--temperature", bo.temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber);
    bon->add_option("--out", bo.out, "Output CSV");
    bon->callback([&]() { run_bon_sweep(bo); });

    CompareOpts co;
    CLI::App* compare = app.add_subcommand("compare", "Method comparison experiment");
    compare->add_option("--methods", co.methods, "Methods to compare");
    compare->add_option("--n-values", co.n_values, "Rollout counts N");
    compare->add_option("--seeds", co.seeds, "Explicit trial seeds");
    compare->add_option("--seed", co.seed, "Root seed for derived trial seeds");
    compare->add_option("--out-dir", co.out_dir, "Output directory");
    compare->add_flag("--build", co.build, "Build prerequisite artifacts");
    compare->add_option("--profile", co.profile, "default or fast")
        ->check(CLI::IsMember({"default", "fast"}));
    compare->add_option("--grid", co.grid, "Grid size")->check(CLI::Range(4, 64));
    compare->add_option("--train-count", co.train_count, "Training instances")
        ->check(CLI::PositiveNumber);
    compare->add_option("--eval-count", co.eval_count, "Evaluation instances")
        ->check(CLI::PositiveNumber);
    compare->add_option("--sft-steps", co.sft_steps, "SFT steps")
        ->check(CLI::NonNegativeNumber);
    compare->add_option("--pref-steps", co.pref_steps, "Preference steps")
        ->check(CLI::NonNegativeNumber);
    compare->add_option("--margin", co.margin, "Margin threshold")
        ->check(CLI::NonNegativeNumber);
    compare->add_option("--temperature", co.temperature, "Sampling temperature")
        ->check(CLI::NonNegativeNumber);
    compare->callback([&]() { run_compare(co, *compare); });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        std::cerr << "run 'perpo --help' or 'perpo <subcommand> --help' for usage\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}

}  // namespace perpo::cli
