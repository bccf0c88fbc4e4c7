#pragma once

#include <cstdint>

#include "perpo/trainer.hpp"

namespace perpo::profiles {

/// Default synthetic grounding profile: the configuration used by the
/// experiment runners and mirrored by configs/grounding_default.cfg.
/// Values were fixed by this repo's own sweep.
struct GroundingProfile {
    int grid_size = 8;
    int train_count = 300;
    int eval_count = 200;
    int n_rollouts = 8;
    double temperature = 0.5;
    double margin_threshold = 0.25;
    int sft_steps = 300;
    int pref_steps = 500;
    double learning_rate = 0.05;
    int batch_size = 8;
    double beta = 0.1;
    double gamma = 0.5;
};

inline GroundingProfile default_grounding() { return {}; }

/// Fast profile for CI-style runs (small N, short training).
inline GroundingProfile fast_grounding() {
    GroundingProfile p;
    p.train_count = 60;
    p.eval_count = 40;
    p.n_rollouts = 8;
    p.sft_steps = 80;
    p.pref_steps = 120;
    return p;
}

trainer::CompareConfig compare_config_from(const GroundingProfile& p,
                                           std::uint64_t root_seed);

}  // namespace perpo::profiles
