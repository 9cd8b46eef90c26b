#pragma once

#include "softer/error.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace softer {

/// Prior hyperparameters of the soft PARAFAC hierarchy.
///
/// Gamma distributions use the shape/rate convention. The τ_γ prior and the
/// residual-variance prior are separate pairs: τ_γ ~ Gamma(a_tau_gamma,
/// b_tau_gamma) while τ² ~ InvGamma(a_tau2, b_tau2) with b_tau2 a scale.
/// b_sigma may be +inf, which pins σ²_k at zero (no softening).
struct Hyperparameters {
    int D = 3;
    double alpha = 1.0;
    double a_lambda = 3.0;
    double b_lambda = 1.3160740129524924; // 3^(1/4)
    double a_tau_gamma = 3.0;
    double b_tau_gamma = 1.0;
    double a_sigma = 0.5;
    double b_sigma = 1.0;
    double a_tau2 = 2.0;
    double b_tau2 = 0.35;
    double prior_sd_mu_delta = 1.0;

    bool operator==(const Hyperparameters&) const = default;

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || std::isnan(v))
                throw ConfigError(std::string("hyperparameter ") + name + " must be positive");
        };
        if (D < 1) throw ConfigError("rank D must be at least 1");
        positive(alpha, "alpha");
        positive(a_lambda, "a_lambda");
        positive(b_lambda, "b_lambda");
        positive(a_tau_gamma, "a_tau_gamma");
        positive(b_tau_gamma, "b_tau_gamma");
        positive(a_sigma, "a_sigma");
        positive(b_sigma, "b_sigma");
        positive(a_tau2, "a_tau2");
        positive(b_tau2, "b_tau2");
        positive(prior_sd_mu_delta, "prior_sd_mu_delta");
    }
};

/// Interpretable targets: prior variance of each coefficient entry and the
/// share of that variance owed to softening.
struct CalibrationTarget {
    double V_star = 1.0;
    double AV_star = 0.1;

    void validate() const {
        if (!(V_star > 0.0) || !std::isfinite(V_star)) throw ConfigError("V_star must be positive");
        if (!(AV_star >= 0.0 && AV_star < 1.0)) throw ConfigError("AV_star must lie in [0, 1)");
    }
};

/// Hyperparameters held fixed while b_tau_gamma and b_sigma are solved for.
struct CalibrationInputs {
    double a_tau_gamma = 3.0;
    double a_sigma = 0.5;
    double a_lambda = 3.0;
    double b_lambda = 1.3160740129524924;
    double alpha = 1.0;
    int D = 3;
};

namespace detail {

inline void require_moments(double a_lambda) {
    if (!(a_lambda > 2.0))
        throw ConfigError("prior moments of B need a_lambda > 2 (got " + std::to_string(a_lambda) + ")");
}

// E{(ζ^(d))^K} for ζ ~ Dirichlet(α/D, ..., α/D), times D.
inline double component_weight(int D, double alpha, std::size_t K) {
    double prod = static_cast<double>(D);
    for (std::size_t r = 0; r < K; ++r) prod *= (alpha / D + r) / (alpha + r);
    return prod;
}

inline double sigma_mean(const Hyperparameters& h) {
    return std::isinf(h.b_sigma) ? 0.0 : h.a_sigma / h.b_sigma;
}

} // namespace detail

/// Prior mean of w_{k,j}: 2 E(λ^-2) = 2 b_λ² / ((a_λ-1)(a_λ-2)).
inline double prior_mean_w(double a_lambda, double b_lambda) {
    detail::require_moments(a_lambda);
    return 2.0 * b_lambda * b_lambda / ((a_lambda - 1.0) * (a_lambda - 2.0));
}

/// D E(ζ^K) for the Dirichlet component weights; equals C when K = 2.
inline double component_factor(int D, double alpha, std::size_t K) {
    return detail::component_weight(D, alpha, K);
}

/// Induced prior variance of any single entry of B (the mean is zero and
/// distinct entries are uncorrelated).
inline double prior_variance(const Hyperparameters& h, std::size_t K) {
    detail::require_moments(h.a_lambda);
    if (K == 0) throw ConfigError("mode count must be positive");
    const double ew = prior_mean_w(h.a_lambda, h.b_lambda);
    const double es = detail::sigma_mean(h);
    double rho = 1.0;      // a(a+1)...(a+l-1)
    double binom = 1.0;    // K choose l
    double total = 0.0;
    for (std::size_t l = 0; l <= K; ++l) {
        if (l > 0) {
            rho *= h.a_tau_gamma + static_cast<double>(l - 1);
            binom = binom * static_cast<double>(K - l + 1) / static_cast<double>(l);
        }
        const double tau_moment = rho / std::pow(h.b_tau_gamma, static_cast<double>(l));
        const double sig_term = (K - l == 0) ? 1.0 : std::pow(es, static_cast<double>(K - l));
        total += tau_moment * binom * std::pow(ew, static_cast<double>(l)) * sig_term;
    }
    return detail::component_weight(h.D, h.alpha, K) * total;
}

/// Prior variance when σ²_k ≡ 0, i.e. of the underlying hard PARAFAC.
inline double hard_prior_variance(const Hyperparameters& h, std::size_t K) {
    detail::require_moments(h.a_lambda);
    const double ew = prior_mean_w(h.a_lambda, h.b_lambda);
    double rho = 1.0;
    for (std::size_t l = 0; l < K; ++l) rho *= h.a_tau_gamma + static_cast<double>(l);
    return detail::component_weight(h.D, h.alpha, K) * rho *
           std::pow(ew / h.b_tau_gamma, static_cast<double>(K));
}

/// Share of the prior variance added by softening, in [0, 1).
inline double additional_variance(const Hyperparameters& h, std::size_t K) {
    const double v = prior_variance(h, K);
    return (v - hard_prior_variance(h, K)) / v;
}

/// Closed-form calibration for matrix predictors. Solves for b_tau_gamma and
/// b_sigma so that the prior variance is V_star with AV_star of it coming
/// from softening. AV_star = 0 yields b_sigma = +inf.
inline Hyperparameters calibrate(const CalibrationTarget& t, const CalibrationInputs& in,
                                 std::size_t K = 2) {
    if (K != 2)
        throw ConfigError("closed-form calibration is only available for matrix predictors (K = 2)");
    t.validate();
    detail::require_moments(in.a_lambda);
    if (in.D < 1 || !(in.alpha > 0) || !(in.a_tau_gamma > 0) || !(in.a_sigma > 0) ||
        !(in.b_lambda > 0))
        throw ConfigError("calibration inputs must be positive");

    const double a = in.a_tau_gamma;
    const double C = (in.alpha / in.D + 1.0) / (in.alpha + 1.0);
    const double ew = prior_mean_w(in.a_lambda, in.b_lambda);
    const double root = std::sqrt(t.V_star * (1.0 - t.AV_star) * a / (C * (a + 1.0)));

    Hyperparameters h;
    h.D = in.D;
    h.alpha = in.alpha;
    h.a_lambda = in.a_lambda;
    h.b_lambda = in.b_lambda;
    h.a_tau_gamma = a;
    h.a_sigma = in.a_sigma;
    // E(w) = (b_τ / a_τ) * root
    h.b_tau_gamma = a * ew / root;
    const double inner = 1.0 - (a + 1.0) / a * (1.0 - 1.0 / (1.0 - t.AV_star));
    const double sigma_ratio = root * (std::sqrt(inner) - 1.0);
    h.b_sigma = sigma_ratio > 0.0 ? in.a_sigma / sigma_ratio
                                  : std::numeric_limits<double>::infinity();
    return h;
}

/// Calibration for any K by root finding on the general variance formula:
/// Var/Var_hard = Σ_l (ρ_l/ρ_K) C(K,l) x^{K-l} with x = E(σ²) b_τ / E(w).
inline Hyperparameters calibrate_numeric(const CalibrationTarget& t, const CalibrationInputs& in,
                                         std::size_t K) {
    t.validate();
    detail::require_moments(in.a_lambda);
    if (K == 0) throw ConfigError("mode count must be positive");
    const double a = in.a_tau_gamma;
    std::vector<double> rho(K + 1, 1.0);
    for (std::size_t l = 1; l <= K; ++l) rho[l] = rho[l - 1] * (a + static_cast<double>(l - 1));

    auto ratio = [&](double x) {
        double binom = 1.0, s = 0.0;
        for (std::size_t l = 0; l <= K; ++l) {
            if (l > 0) binom = binom * static_cast<double>(K - l + 1) / static_cast<double>(l);
            s += rho[l] / rho[K] * binom * std::pow(x, static_cast<double>(K - l));
        }
        return s;
    };
    const double goal = 1.0 / (1.0 - t.AV_star);
    double x = 0.0;
    if (t.AV_star > 0.0) {
        double lo = 0.0, hi = 1.0;
        while (ratio(hi) < goal) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (ratio(mid) < goal ? lo : hi) = mid;
        }
        x = 0.5 * (lo + hi);
    }

    Hyperparameters h;
    h.D = in.D;
    h.alpha = in.alpha;
    h.a_lambda = in.a_lambda;
    h.b_lambda = in.b_lambda;
    h.a_tau_gamma = a;
    h.a_sigma = in.a_sigma;
    const double ew = prior_mean_w(in.a_lambda, in.b_lambda);
    const double hard_target = t.V_star * (1.0 - t.AV_star);
    const double cw = detail::component_weight(in.D, in.alpha, K);
    h.b_tau_gamma = ew * std::pow(cw * rho[K] / hard_target, 1.0 / static_cast<double>(K));
    const double sigma_mean = x * ew / h.b_tau_gamma;
    h.b_sigma = sigma_mean > 0.0 ? in.a_sigma / sigma_mean
                                 : std::numeric_limits<double>::infinity();
    return h;
}

/// The default bundle: α = 1, a_λ = 3, b_λ = a_λ^{1/(2K)}, a_τγ = 3,
/// a_σ = 0.5, targets Var = 1 and AV = 10%, (μ, δ) ~ N(0, I) and
/// τ² ~ InvGamma(2, 0.35).
inline Hyperparameters default_hyperparameters(std::size_t K, int D = 3) {
    if (K == 0) throw ConfigError("mode count must be positive");
    CalibrationInputs in;
    in.D = D;
    in.b_lambda = std::pow(in.a_lambda, 1.0 / (2.0 * static_cast<double>(K)));
    const CalibrationTarget t{1.0, 0.1};
    Hyperparameters h = K == 2 ? calibrate(t, in, 2) : calibrate_numeric(t, in, K);
    h.a_tau2 = 2.0;
    h.b_tau2 = 0.35;
    h.prior_sd_mu_delta = 1.0;
    return h;
}

/// Hard-PARAFAC baseline with the same total prior variance as the default
/// bundle: AV = 0, so b_sigma is infinite and sigma2 drops out.
inline Hyperparameters hard_hyperparameters(std::size_t K, int D = 3) {
    Hyperparameters h = default_hyperparameters(K, D);
    CalibrationInputs in;
    in.D = D;
    in.b_lambda = h.b_lambda;
    const CalibrationTarget t{1.0, 0.0};
    const Hyperparameters c = K == 2 ? calibrate(t, in, 2) : calibrate_numeric(t, in, K);
    h.b_tau_gamma = c.b_tau_gamma;
    h.b_sigma = c.b_sigma;
    return h;
}

} // namespace softer
