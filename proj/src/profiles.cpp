#include "perpo/profiles.hpp"

#include "perpo/util.hpp"

namespace perpo::profiles {

trainer::CompareConfig compare_config_from(const GroundingProfile& p,
                                           std::uint64_t root_seed) {
    trainer::CompareConfig cfg;
    cfg.task_kind = tasks::TaskKind::Grounding;
    cfg.grid_size = p.grid_size;
    cfg.train_count = p.train_count;
    cfg.eval_count = p.eval_count;
    cfg.temperature = p.temperature;
    cfg.margin_threshold = p.margin_threshold;
    cfg.n_values = {2, 4, 8};

    cfg.seeds.clear();
    for (std::uint64_t i = 0; i < 5; ++i)
        cfg.seeds.push_back(seeds::derive(root_seed, "trial", i));

    cfg.sft.method = trainer::Method::SFT;
    cfg.sft.learning_rate = p.learning_rate;
    cfg.sft.steps = p.sft_steps;
    cfg.sft.batch_size = p.batch_size;

    cfg.pref.method = trainer::Method::PERPO;
    cfg.pref.beta = p.beta;
    cfg.pref.gamma = p.gamma;
    cfg.pref.learning_rate = p.learning_rate;
    cfg.pref.steps = p.pref_steps;
    cfg.pref.batch_size = p.batch_size;
    return cfg;
}

}  // namespace perpo::profiles
