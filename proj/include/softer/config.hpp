#pragma once

#include "softer/calibration.hpp"
#include "softer/error.hpp"
#include "softer/tensor.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

namespace softer {

enum class Symmetry { none, symmetric, semi_symmetric };

inline std::string to_string(Symmetry s) {
    switch (s) {
    case Symmetry::none: return "none";
    case Symmetry::symmetric: return "symmetric";
    case Symmetry::semi_symmetric: return "semi-symmetric";
    }
    return "none";
}

inline Symmetry symmetry_from_string(std::string_view s) {
    if (s == "none") return Symmetry::none;
    if (s == "symmetric") return Symmetry::symmetric;
    if (s == "semi-symmetric" || s == "semi_symmetric") return Symmetry::semi_symmetric;
    throw ConfigError("unknown symmetry '" + std::string(s) + "' (none|symmetric|semi-symmetric)");
}

struct SamplerSettings {
    std::size_t iterations = 5000;
    std::size_t burn_in = 2500;
    std::size_t thin = 1;
    std::size_t chains = 2;
    std::uint64_t seed = 1;
    std::size_t checkpoint_every = 0; // 0 disables checkpoints

    bool operator==(const SamplerSettings&) const = default;

    std::size_t retained() const { return iterations > burn_in ? (iterations - burn_in) / thin : 0; }
};

/// Everything that defines a fit: predictor shape, prior, variant and
/// sampler settings.
struct SofterConfig {
    Dims dims;
    Hyperparameters hyper;
    Symmetry symmetry = Symmetry::none;
    std::string family = "gaussian";
    bool hard_mode = false;
    SamplerSettings sampler;
    double sym_tol = 0.0;

    bool operator==(const SofterConfig&) const = default;

    std::size_t K() const { return dims.size(); }
    int D() const { return hyper.D; }

    void validate() const {
        if (dims.empty()) throw ConfigError("config needs predictor dims");
        for (auto p : dims)
            if (p == 0) throw ConfigError("predictor dims must be positive");
        hyper.validate();
        if (family != "gaussian")
            throw ConfigError("outcome family '" + family + "' is not supported (gaussian only)");
        if (!hard_mode && std::isinf(hyper.b_sigma))
            throw ConfigError("b_sigma = inf removes all softening; use hard_mode instead");
        if (symmetry == Symmetry::symmetric && (dims.size() != 2 || dims[0] != dims[1]))
            throw ConfigError("symmetric mode needs a square matrix predictor");
        if (symmetry == Symmetry::semi_symmetric && (dims.size() != 3 || dims[0] != dims[1]))
            throw ConfigError("semi-symmetric mode needs an R x R x p predictor");
        if (symmetry != Symmetry::none && dims[0] < 2)
            throw ConfigError("symmetric modes need at least two regions");
        if (sampler.thin == 0) throw ConfigError("thin must be at least 1");
        if (sampler.chains == 0) throw ConfigError("need at least one chain");
        if (sampler.burn_in > sampler.iterations)
            throw ConfigError("burn-in exceeds the number of iterations");
        if (!(sym_tol >= 0.0)) throw ConfigError("sym_tol must be non-negative");
    }
};

/// Default configuration for predictors of the given dims: calibrated prior
/// (Var = 1, AV = 10%), rank D.
inline SofterConfig default_config(const Dims& dims, int D = 3) {
    if (dims.empty()) throw ShapeError("default_config needs predictor dims");
    SofterConfig c;
    c.dims = dims;
    c.hyper = default_hyperparameters(dims.size(), D);
    return c;
}

// JSON mirrors the structs field for field. Infinite b_sigma is written as
// the string "inf".
inline nlohmann::json to_json(const Hyperparameters& h) {
    nlohmann::json j;
    j["D"] = h.D;
    j["alpha"] = h.alpha;
    j["a_lambda"] = h.a_lambda;
    j["b_lambda"] = h.b_lambda;
    j["a_tau_gamma"] = h.a_tau_gamma;
    j["b_tau_gamma"] = h.b_tau_gamma;
    j["a_sigma"] = h.a_sigma;
    if (std::isinf(h.b_sigma))
        j["b_sigma"] = "inf";
    else
        j["b_sigma"] = h.b_sigma;
    j["a_tau2"] = h.a_tau2;
    j["b_tau2"] = h.b_tau2;
    j["prior_sd_mu_delta"] = h.prior_sd_mu_delta;
    return j;
}

inline Hyperparameters hyperparameters_from_json(const nlohmann::json& j, Hyperparameters h = {}) {
    try {
        if (j.contains("D")) h.D = j.at("D").get<int>();
        auto num = [&](const char* key, double& field) {
            if (j.contains(key)) field = j.at(key).get<double>();
        };
        num("alpha", h.alpha);
        num("a_lambda", h.a_lambda);
        num("b_lambda", h.b_lambda);
        num("a_tau_gamma", h.a_tau_gamma);
        num("b_tau_gamma", h.b_tau_gamma);
        num("a_sigma", h.a_sigma);
        if (j.contains("b_sigma")) {
            const auto& v = j.at("b_sigma");
            h.b_sigma = v.is_string() && v.get<std::string>() == "inf"
                            ? std::numeric_limits<double>::infinity()
                            : v.get<double>();
        }
        num("a_tau2", h.a_tau2);
        num("b_tau2", h.b_tau2);
        num("prior_sd_mu_delta", h.prior_sd_mu_delta);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad hyperparameter JSON: ") + e.what());
    }
    return h;
}

inline nlohmann::json to_json(const SamplerSettings& s) {
    return {{"iterations", s.iterations}, {"burn_in", s.burn_in},
            {"thin", s.thin},             {"chains", s.chains},
            {"seed", s.seed},             {"checkpoint_every", s.checkpoint_every}};
}

inline SamplerSettings sampler_from_json(const nlohmann::json& j, SamplerSettings s = {}) {
    try {
        if (j.contains("iterations")) s.iterations = j.at("iterations").get<std::size_t>();
        if (j.contains("burn_in")) s.burn_in = j.at("burn_in").get<std::size_t>();
        if (j.contains("thin")) s.thin = j.at("thin").get<std::size_t>();
        if (j.contains("chains")) s.chains = j.at("chains").get<std::size_t>();
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("checkpoint_every"))
            s.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad sampler JSON: ") + e.what());
    }
    return s;
}

inline nlohmann::json to_json(const SofterConfig& c) {
    nlohmann::json j;
    j["dims"] = c.dims;
    j["hyper"] = to_json(c.hyper);
    j["symmetry"] = to_string(c.symmetry);
    j["family"] = c.family;
    j["hard_mode"] = c.hard_mode;
    j["sampler"] = to_json(c.sampler);
    j["sym_tol"] = c.sym_tol;
    return j;
}

/// Parses a config document. Missing hyperparameters fall back to the
/// calibrated defaults for the document's dims and D.
inline SofterConfig config_from_json(const nlohmann::json& j) {
    SofterConfig c;
    try {
        c.dims = j.at("dims").get<Dims>();
        int D = 3;
        if (j.contains("hyper") && j["hyper"].contains("D")) D = j["hyper"]["D"].get<int>();
        c = default_config(c.dims, D);
        if (j.contains("hyper")) c.hyper = hyperparameters_from_json(j["hyper"], c.hyper);
        if (j.contains("symmetry")) c.symmetry = symmetry_from_string(j["symmetry"].get<std::string>());
        if (j.contains("family")) c.family = j["family"].get<std::string>();
        if (j.contains("hard_mode")) c.hard_mode = j["hard_mode"].get<bool>();
        if (j.contains("sampler")) c.sampler = sampler_from_json(j["sampler"]);
        if (j.contains("sym_tol")) c.sym_tol = j["sym_tol"].get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config JSON: ") + e.what());
    }
    return c;
}

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

// Hash of the model-defining part of a config. The sampler seed and chain
// count are excluded so chains of one fit share a hash.
inline std::string config_hash(const SofterConfig& c) {
    nlohmann::json j = to_json(c);
    j["sampler"].erase("seed");
    j["sampler"].erase("chains");
    j["sampler"].erase("checkpoint_every");
    return hex64(fnv1a(j.dump()));
}

} // namespace softer
