#pragma once

#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/error.hpp"
#include "softer/sampler.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace softer {

/// Gelman-Rubin potential scale reduction factor,
/// sqrt(((n-1)/n W + B/n) / W). With split = true every chain is cut into
/// halves first, which also makes a single chain usable.
inline double psrf(const std::vector<std::vector<double>>& chains, bool split = false) {
    std::vector<std::vector<double>> parts;
    if (split) {
        for (const auto& c : chains) {
            const std::size_t h = c.size() / 2;
            parts.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(h));
            parts.emplace_back(c.end() - static_cast<std::ptrdiff_t>(h), c.end());
        }
    } else {
        parts = chains;
    }
    if (parts.size() < 2) throw DataError("psrf is unavailable with a single chain");
    const std::size_t n = parts.front().size();
    for (const auto& c : parts)
        if (c.size() != n) throw DataError("psrf needs chains of equal length");
    if (n < 10) throw DataError("psrf needs at least 10 draws per chain");

    const double m = static_cast<double>(parts.size()), nn = static_cast<double>(n);
    std::vector<double> means;
    double W = 0.0;
    for (const auto& c : parts) {
        double mean = 0.0;
        for (double v : c) mean += v;
        mean /= nn;
        double ss = 0.0;
        for (double v : c) ss += (v - mean) * (v - mean);
        W += ss / (nn - 1.0);
        means.push_back(mean);
    }
    W /= m;
    double grand = 0.0;
    for (double v : means) grand += v;
    grand /= m;
    double B = 0.0;
    for (double v : means) B += (v - grand) * (v - grand);
    B *= nn / (m - 1.0);
    if (W == 0.0) return B == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(((nn - 1.0) / nn * W + B / nn) / W);
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" rule). `sorted` must be ascending and non-empty.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

struct Interval {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

inline Interval interval_of(std::vector<double> draws, double level) {
    if (draws.empty()) throw DataError("no draws to summarize");
    Interval out;
    for (double v : draws) out.mean += v;
    out.mean /= static_cast<double>(draws.size());
    std::sort(draws.begin(), draws.end());
    const double tail = 0.5 * (1.0 - level);
    out.lower = quantile_sorted(draws, tail);
    out.upper = quantile_sorted(draws, 1.0 - tail);
    // the mean of equal draws can land an ulp outside [min, max]
    out.mean = std::clamp(out.mean, draws.front(), draws.back());
    return out;
}

/// Deterministic stratified subsample of B entries for convergence
/// monitoring: up to `count` evenly spaced positions, restricted to the free
/// (j1 > j2) entries in symmetric modes.
inline std::vector<std::size_t> monitored_entries(const Dims& dims, Symmetry symmetry, std::size_t count = 32) {
    std::vector<std::size_t> eligible;
    const std::size_t P = dims_product(dims);
    const std::size_t inner = symmetry == Symmetry::none ? 1 : P / (dims[0] * dims[1]);
    for (std::size_t pos = 0; pos < P; ++pos) {
        if (symmetry != Symmetry::none) {
            const std::size_t a = pos / (dims[1] * inner), b = (pos / inner) % dims[1];
            if (a <= b) continue;
        }
        eligible.push_back(pos);
    }
    if (eligible.size() <= count) return eligible;
    std::vector<std::size_t> out;
    const double step = static_cast<double>(eligible.size()) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(eligible[static_cast<std::size_t>((static_cast<double>(i) + 0.5) * step)]);
    return out;
}

struct MonitoredPsrf {
    std::string name;
    double value = 0.0;
};

struct SummaryOptions {
    double level = 0.95;
    bool split = false;
    Symmetry symmetry = Symmetry::none;
    std::size_t monitored = 32;
    std::size_t min_draws = 50;
};

struct FitSummary {
    double level = 0.95;
    std::size_t draws = 0;
    std::size_t chains = 0;
    DenseTensor posterior_mean_B;
    DenseTensor ci_lower;
    DenseTensor ci_upper;
    std::vector<char> selected;
    Interval mu;
    Interval tau2;
    std::vector<Interval> delta;
    std::vector<MonitoredPsrf> psrf; // empty when unavailable
    std::string psrf_note;

    std::size_t selected_count() const {
        return static_cast<std::size_t>(std::count(selected.begin(), selected.end(), 1));
    }
    double max_psrf() const {
        double m = 0.0;
        for (const auto& p : psrf) m = std::max(m, p.value);
        return m;
    }
};

namespace detail {

inline void check_compatible(const std::vector<ChainSamples>& chains) {
    if (chains.empty()) throw DataError("no chains to summarize");
    for (const auto& c : chains) {
        if (c.dims != chains.front().dims || c.p_cov != chains.front().p_cov)
            throw ShapeError("chains disagree on dims or covariate count");
        if (c.config_hash != chains.front().config_hash) throw DataError("chains come from different configs");
    }
}

inline std::size_t pooled_draws(const std::vector<ChainSamples>& chains) {
    std::size_t t = 0;
    for (const auto& c : chains) t += c.draws();
    return t;
}

template <class F>
std::vector<std::vector<double>> per_chain(const std::vector<ChainSamples>& chains, F&& get) {
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        std::vector<double> v(c.draws());
        for (std::size_t t = 0; t < c.draws(); ++t) v[t] = get(c, t);
        out.push_back(std::move(v));
    }
    return out;
}

inline std::vector<double> pooled(const std::vector<std::vector<double>>& parts) {
    std::vector<double> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

} // namespace detail

/// Pooled-chain posterior summary: entrywise means, equal-tailed type-7
/// credible intervals and the CI-excludes-zero selection flags.
inline FitSummary summarize(const std::vector<ChainSamples>& chains, const SummaryOptions& opt = {}) {
    detail::check_compatible(chains);
    if (!(opt.level > 0.0 && opt.level <= 1.0)) throw ConfigError("level must lie in (0, 1]");
    const std::size_t T = detail::pooled_draws(chains);
    if (T < opt.min_draws)
        throw DataError("summary needs at least " + std::to_string(opt.min_draws) + " draws, got " +
                        std::to_string(T));
    const Dims& dims = chains.front().dims;
    const std::size_t P = dims_product(dims), pc = chains.front().p_cov;

    FitSummary s;
    s.level = opt.level;
    s.draws = T;
    s.chains = chains.size();
    s.posterior_mean_B = DenseTensor(dims);
    s.ci_lower = DenseTensor(dims);
    s.ci_upper = DenseTensor(dims);
    s.selected.assign(P, 0);
    std::vector<double> buf;
    buf.reserve(T);
    for (std::size_t e = 0; e < P; ++e) {
        buf.clear();
        for (const auto& c : chains)
            for (std::size_t t = 0; t < c.draws(); ++t) buf.push_back(c.B[t * P + e]);
        const Interval iv = interval_of(buf, opt.level);
        s.posterior_mean_B[e] = iv.mean;
        s.ci_lower[e] = iv.lower;
        s.ci_upper[e] = iv.upper;
        s.selected[e] = (iv.lower > 0.0 || iv.upper < 0.0) ? 1 : 0;
    }

    auto mu = detail::per_chain(chains, [](const ChainSamples& c, std::size_t t) { return c.mu[t]; });
    auto tau2 = detail::per_chain(chains, [](const ChainSamples& c, std::size_t t) { return c.tau2[t]; });
    s.mu = interval_of(detail::pooled(mu), opt.level);
    s.tau2 = interval_of(detail::pooled(tau2), opt.level);
    std::vector<std::vector<std::vector<double>>> delta;
    for (std::size_t j = 0; j < pc; ++j) {
        delta.push_back(
            detail::per_chain(chains, [&](const ChainSamples& c, std::size_t t) { return c.delta[t * pc + j]; }));
        s.delta.push_back(interval_of(detail::pooled(delta.back()), opt.level));
    }

    try {
        s.psrf.push_back({"mu", psrf(mu, opt.split)});
        for (std::size_t j = 0; j < pc; ++j) s.psrf.push_back({"delta[" + std::to_string(j + 1) + "]", psrf(delta[j], opt.split)});
        s.psrf.push_back({"tau2", psrf(tau2, opt.split)});
        for (auto e : monitored_entries(dims, opt.symmetry, opt.monitored)) {
            const auto idx = DenseTensor(dims).multi_index(e);
            std::string name = "B[";
            for (std::size_t k = 0; k < idx.size(); ++k) name += (k ? "," : "") + std::to_string(idx[k]);
            s.psrf.push_back({name + "]", psrf(detail::per_chain(chains, [&](const ChainSamples& c, std::size_t t) {
                                                   return c.B[t * P + e];
                                               }),
                                               opt.split)});
        }
    } catch (const DataError& e) {
        s.psrf.clear();
        s.psrf_note = e.what();
    }
    return s;
}

/// Posterior predictive mean of each unit: the average over pooled draws of
/// μ + C_iᵀδ + ⟨X_i, B⟩.
inline Eigen::VectorXd predict(const std::vector<ChainSamples>& chains, const Dataset& data) {
    detail::check_compatible(chains);
    data.validate(chains.front().dims);
    const std::size_t P = chains.front().entries(), pc = chains.front().p_cov;
    if (data.p_cov() != pc)
        throw ShapeError("new data has " + std::to_string(data.p_cov()) + " covariates, the fit has " +
                         std::to_string(pc));
    const std::size_t T = detail::pooled_draws(chains);
    if (T == 0) throw DataError("no draws to predict from");
    Eigen::VectorXd Bbar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(P));
    Eigen::VectorXd dbar = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pc));
    double mubar = 0.0;
    for (const auto& c : chains)
        for (std::size_t t = 0; t < c.draws(); ++t) {
            mubar += c.mu[t];
            Bbar += Eigen::Map<const Eigen::VectorXd>(c.B.data() + t * P, static_cast<Eigen::Index>(P));
            if (pc > 0) dbar += Eigen::Map<const Eigen::VectorXd>(c.delta.data() + t * pc, static_cast<Eigen::Index>(pc));
        }
    const double inv = 1.0 / static_cast<double>(T);
    mubar *= inv;
    Bbar *= inv;
    dbar *= inv;
    Eigen::VectorXd out(static_cast<Eigen::Index>(data.n()));
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto x = data.predictors[i].values();
        double v = mubar + Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(P)).dot(Bbar);
        if (pc > 0) v += data.covariates.row(ii).dot(dbar);
        out[ii] = v;
    }
    return out;
}

inline nlohmann::json to_json(const Interval& iv) {
    return {{"mean", iv.mean}, {"lower", iv.lower}, {"upper", iv.upper}};
}

inline nlohmann::json to_json(const FitSummary& s) {
    nlohmann::json j;
    j["level"] = s.level;
    j["draws"] = s.draws;
    j["chains"] = s.chains;
    j["dims"] = s.posterior_mean_B.dims();
    j["posterior_mean_B"] = std::vector<double>(s.posterior_mean_B.data().begin(), s.posterior_mean_B.data().end());
    j["ci_lower"] = std::vector<double>(s.ci_lower.data().begin(), s.ci_lower.data().end());
    j["ci_upper"] = std::vector<double>(s.ci_upper.data().begin(), s.ci_upper.data().end());
    j["selected"] = std::vector<int>(s.selected.begin(), s.selected.end());
    j["mu"] = to_json(s.mu);
    j["tau2"] = to_json(s.tau2);
    j["delta"] = nlohmann::json::array();
    for (const auto& d : s.delta) j["delta"].push_back(to_json(d));
    j["psrf"] = nlohmann::json::object();
    for (const auto& p : s.psrf) j["psrf"][p.name] = p.value;
    if (!s.psrf_note.empty()) j["psrf_note"] = s.psrf_note;
    return j;
}

} // namespace softer
