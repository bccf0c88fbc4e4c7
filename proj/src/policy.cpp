#include "perpo/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "perpo/util.hpp"

namespace perpo::policy {

PolicyParams PolicyParams::zeros(int vocab_size, int prompt_dim, int max_seq_len) {
    if (vocab_size < 2 || prompt_dim < 1 || max_seq_len < 1)
        throw std::invalid_argument("PolicyParams::zeros: bad dimensions");
    PolicyParams p;
    p.vocab_size = vocab_size;
    p.feature_dim = prompt_dim + vocab_size + 1;
    p.max_seq_len = max_seq_len;
    p.weights.assign(static_cast<std::size_t>(vocab_size) * p.feature_dim, 0.0);
    return p;
}

void PolicyParams::validate() const {
    if (vocab_size < 2 || max_seq_len < 1 || prompt_dim() < 1)
        throw std::invalid_argument("PolicyParams: bad dimensions");
    if (weights.size() != static_cast<std::size_t>(vocab_size) * feature_dim)
        throw std::invalid_argument("PolicyParams: weight size mismatch");
    for (double w : weights)
        if (!std::isfinite(w))
            throw std::invalid_argument("PolicyParams: non-finite weight");
}

namespace {

// Per-step feature vector: prompt features, then one-hot of the previous
// token (the start column for step 0). Returned by value; sizes here are
// tiny so clarity wins over reuse.
std::vector<double> step_features(const PolicyParams& params,
                                  std::span<const double> prompt_features, int prev) {
    std::vector<double> f(static_cast<std::size_t>(params.feature_dim), 0.0);
    for (std::size_t k = 0; k < prompt_features.size(); ++k) f[k] = prompt_features[k];
    std::size_t hot = prev < 0
                          ? static_cast<std::size_t>(params.start_column())
                          : static_cast<std::size_t>(params.prompt_dim() + prev);
    f[hot] = 1.0;
    return f;
}

std::vector<double> step_logits(const PolicyParams& params, std::span<const double> f) {
    std::vector<double> z(static_cast<std::size_t>(params.vocab_size), 0.0);
    for (int v = 0; v < params.vocab_size; ++v) {
        double acc = 0.0;
        for (int k = 0; k < params.feature_dim; ++k) acc += params.at(v, k) * f[k];
        z[static_cast<std::size_t>(v)] = acc;
    }
    return z;
}

// Stable softmax in place; returns the log normalizer relative to the max.
void softmax_inplace(std::vector<double>& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double total = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        total += v;
    }
    for (double& v : z) v /= total;
}

double log_softmax_at(const std::vector<double>& z, int idx) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double total = 0.0;
    for (double v : z) total += std::exp(v - zmax);
    return z[static_cast<std::size_t>(idx)] - zmax - std::log(total);
}

void check_prompt(const PolicyParams& params, std::span<const double> prompt_features) {
    if (static_cast<int>(prompt_features.size()) != params.prompt_dim())
        throw std::invalid_argument("policy: prompt feature size mismatch");
}

void check_token(const PolicyParams& params, int t) {
    if (t < 0 || t >= params.vocab_size)
        throw std::invalid_argument("policy: token out of range");
}

}  // namespace

double sequence_logprob(const PolicyParams& params, std::span<const double> prompt_features,
                        const TokenSequence& y) {
    params.validate();
    check_prompt(params, prompt_features);
    if (static_cast<int>(y.tokens.size()) > params.max_seq_len)
        throw std::invalid_argument("sequence_logprob: sequence longer than max_seq_len");
    double lp = 0.0;
    int prev = -1;
    for (int t : y.tokens) {
        check_token(params, t);
        auto f = step_features(params, prompt_features, prev);
        auto z = step_logits(params, f);
        lp += log_softmax_at(z, t);
        prev = t;
    }
    return lp;
}

TokenSequence sample_sequence(const PolicyParams& params,
                              std::span<const double> prompt_features,
                              const GenerationConfig& gen) {
    params.validate();
    check_prompt(params, prompt_features);
    if (gen.max_length < 1 || gen.max_length > params.max_seq_len)
        throw std::invalid_argument("sample_sequence: bad max_length");
    if (gen.temperature < 0.0)
        throw std::invalid_argument("sample_sequence: negative temperature");

    rng::Engine eng(gen.seed);
    TokenSequence out;
    out.tokens.reserve(static_cast<std::size_t>(gen.max_length));
    int prev = -1;
    for (int step = 0; step < gen.max_length; ++step) {
        auto f = step_features(params, prompt_features, prev);
        auto z = step_logits(params, f);
        int pick = 0;
        if (gen.temperature == 0.0) {
            for (int v = 1; v < params.vocab_size; ++v)
                if (z[static_cast<std::size_t>(v)] > z[static_cast<std::size_t>(pick)]) pick = v;
        } else {
            for (double& v : z) v /= gen.temperature;
            softmax_inplace(z);
            double u = rng::uniform53(eng);
            double cum = 0.0;
            pick = params.vocab_size - 1;
            for (int v = 0; v < params.vocab_size; ++v) {
                cum += z[static_cast<std::size_t>(v)];
                if (u < cum) {
                    pick = v;
                    break;
                }
            }
        }
        out.tokens.push_back(pick);
        prev = pick;
    }
    return out;
}

std::vector<double> logprob_param_gradient(const PolicyParams& params,
                                           std::span<const double> prompt_features,
                                           const TokenSequence& y) {
    params.validate();
    check_prompt(params, prompt_features);
    if (static_cast<int>(y.tokens.size()) > params.max_seq_len)
        throw std::invalid_argument("logprob_param_gradient: sequence longer than max_seq_len");
    std::vector<double> grad(params.weights.size(), 0.0);
    int prev = -1;
    for (int t : y.tokens) {
        check_token(params, t);
        auto f = step_features(params, prompt_features, prev);
        auto p = step_logits(params, f);
        softmax_inplace(p);
        for (int v = 0; v < params.vocab_size; ++v) {
            double coef = (v == t ? 1.0 : 0.0) - p[static_cast<std::size_t>(v)];
            if (coef == 0.0) continue;
            std::size_t base = static_cast<std::size_t>(v) * params.feature_dim;
            for (int k = 0; k < params.feature_dim; ++k)
                if (f[static_cast<std::size_t>(k)] != 0.0)
                    grad[base + k] += coef * f[static_cast<std::size_t>(k)];
        }
        prev = t;
    }
    return grad;
}

ReferenceSnapshot snapshot_reference(const PolicyParams& params) {
    params.validate();
    return ReferenceSnapshot(params);
}

std::vector<double> next_token_distribution(const PolicyParams& params,
                                            std::span<const double> prompt_features,
                                            std::span<const int> prefix,
                                            double temperature) {
    params.validate();
    check_prompt(params, prompt_features);
    if (temperature <= 0.0)
        throw std::invalid_argument("next_token_distribution: temperature must be positive");
    int prev = -1;
    if (!prefix.empty()) {
        check_token(params, prefix.back());
        prev = prefix.back();
    }
    auto f = step_features(params, prompt_features, prev);
    auto z = step_logits(params, f);
    for (double& v : z) v /= temperature;
    softmax_inplace(z);
    return z;
}

void save_policy(const PolicyParams& params, const std::string& path) {
    params.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("save_policy: cannot open " + path);
    out << "perpo-policy v1 vocab=" << params.vocab_size
        << " feature_dim=" << params.feature_dim
        << " max_seq_len=" << params.max_seq_len << "\n";
    for (int v = 0; v < params.vocab_size; ++v) {
        for (int k = 0; k < params.feature_dim; ++k) {
            if (k) out << ' ';
            out << fmt::g17(params.at(v, k));
        }
        out << '\n';
    }
    if (!out)
        throw std::runtime_error("save_policy: write failed for " + path);
}

PolicyParams load_policy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("load_policy: cannot open " + path);
    std::string header;
    std::getline(in, header);
    PolicyParams p;
    int n = std::sscanf(header.c_str(), "perpo-policy v1 vocab=%d feature_dim=%d max_seq_len=%d",
                        &p.vocab_size, &p.feature_dim, &p.max_seq_len);
    if (n != 3)
        throw std::runtime_error("load_policy: bad header in " + path);
    p.weights.reserve(static_cast<std::size_t>(p.vocab_size) * p.feature_dim);
    for (int v = 0; v < p.vocab_size; ++v) {
        std::string line;
        if (!std::getline(in, line))
            throw std::runtime_error("load_policy: truncated file " + path);
        std::istringstream row(line);
        for (int k = 0; k < p.feature_dim; ++k) {
            double w;
            if (!(row >> w))
                throw std::runtime_error("load_policy: short row in " + path);
            p.weights.push_back(w);
        }
        double extra;
        if (row >> extra)
            throw std::runtime_error("load_policy: long row in " + path);
    }
    p.validate();
    return p;
}

}  // namespace perpo::policy
