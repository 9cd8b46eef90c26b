#pragma once

#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/error.hpp"
#include "softer/layout.hpp"
#include "softer/state.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

namespace softer {

/// B = Σ_d ξ_d B_1^(d) ∘ ... ∘ B_K^(d); ξ_d = 1 outside symmetric mode.
inline DenseTensor compose_coefficients(const ParameterState& s) {
    if (s.beta.empty() || s.beta.front().empty()) throw ShapeError("state has no coefficient tensors");
    const std::size_t D = s.beta.front().size();
    std::vector<std::vector<DenseTensor>> comps(D);
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t k = 0; k < s.K(); ++k) comps[d].push_back(s.beta[k][d]);
    if (s.xi.empty()) return soft_compose(comps);
    for (std::size_t d = 0; d < D; ++d)
        if (s.xi[d] < 0)
            for (auto& v : comps[d][0].values()) v = -v;
    return soft_compose(comps);
}

inline double linear_predictor(const ParameterState& s, const DenseTensor& B, const Dataset& data,
                               std::size_t i) {
    if (i >= data.n()) throw ShapeError("unit index out of range");
    if (static_cast<std::size_t>(s.delta.size()) != data.p_cov())
        throw ShapeError("delta has " + std::to_string(s.delta.size()) + " entries for " +
                         std::to_string(data.p_cov()) + " covariates");
    double v = s.mu + frobenius_inner(data.predictors[i], B);
    if (data.p_cov() > 0) v += data.covariates.row(static_cast<Eigen::Index>(i)).dot(s.delta);
    return v;
}

/// μ + C_iᵀδ + ⟨X_i, B⟩_F with B composed from the state.
inline double linear_predictor(const ParameterState& s, const Dataset& data, std::size_t i) {
    return linear_predictor(s, compose_coefficients(s), data, i);
}

namespace detail {

inline double log_normal_kernel(double x, double mean, double var) {
    return -0.5 * std::log(var) - 0.5 * (x - mean) * (x - mean) / var;
}

inline void require_finite(double v, const char* block) {
    if (!std::isfinite(v)) throw NumericError(std::string("log density is not finite in block ") + block);
}

} // namespace detail

/// Unnormalized log posterior density of a state. ζ is treated as a free
/// positive vector under the Dirichlet kernel, so single coordinates can be
/// perturbed in ratio tests. With integrate_w the w block is integrated out,
/// which turns each γ | λ into a Laplace law. In hard mode β ≡ γ and the β
/// and σ² blocks carry no density.
inline double log_joint(const ParameterState& s, const Dataset& data, const SofterConfig& cfg,
                        const Layout& L, bool integrate_w = false) {
    const Hyperparameters& h = cfg.hyper;
    const DenseTensor B = compose_coefficients(s);

    double ll = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double r = data.y[static_cast<Eigen::Index>(i)] - linear_predictor(s, B, data, i);
        ll += r * r;
    }
    ll = -0.5 * static_cast<double>(data.n()) * std::log(s.tau2) - 0.5 * ll / s.tau2;
    detail::require_finite(ll, "likelihood");

    const double sd2 = h.prior_sd_mu_delta * h.prior_sd_mu_delta;
    double lp_mu = -0.5 * (s.mu * s.mu + s.delta.squaredNorm()) / sd2;
    detail::require_finite(lp_mu, "mu/delta");

    double lp_tau2 = -(h.a_tau2 + 1.0) * std::log(s.tau2) - h.b_tau2 / s.tau2;
    detail::require_finite(lp_tau2, "tau2");

    double lp_beta = 0.0, lp_sigma = 0.0;
    if (!L.hard) {
        for (std::size_t g = 0; g < L.groups(); ++g) {
            const double s2 = s.sigma2[static_cast<Eigen::Index>(L.group_modes[g].front())];
            lp_sigma += (h.a_sigma - 1.0) * std::log(s2) - h.b_sigma * s2;
        }
        for (std::size_t k = 0; k < L.K; ++k)
            for (int d = 0; d < L.D; ++d) {
                const double var = s.sigma2[static_cast<Eigen::Index>(k)] * s.zeta[d];
                const auto& beta = s.beta[k][static_cast<std::size_t>(d)];
                const auto& gamma = s.gamma[k][static_cast<std::size_t>(d)];
                for (auto pos : L.free_positions)
                    lp_beta += detail::log_normal_kernel(
                        beta[pos], gamma[static_cast<Eigen::Index>(L.mode_index(pos, k))], var);
            }
        detail::require_finite(lp_sigma, "sigma2");
        detail::require_finite(lp_beta, "beta");
    }

    double lp_gamma = 0.0, lp_w = 0.0, lp_lambda = 0.0;
    for (std::size_t g = 0; g < L.groups(); ++g) {
        const std::size_t k = L.group_modes[g].front();
        for (int d = 0; d < L.D; ++d) {
            const auto du = static_cast<std::size_t>(d);
            const double lam = s.lambda[k][du];
            const double scale2 = s.tau_gamma * s.zeta[d];
            lp_lambda += (h.a_lambda - 1.0) * std::log(lam) - h.b_lambda * lam;
            for (std::size_t j = 0; j < L.group_length[g]; ++j) {
                const double gj = s.gamma[k][du][static_cast<Eigen::Index>(j)];
                if (integrate_w) {
                    const double sc = std::sqrt(scale2);
                    lp_gamma += std::log(lam / (2.0 * sc)) - lam * std::abs(gj) / sc;
                } else {
                    const double wj = s.w[k][du][static_cast<Eigen::Index>(j)];
                    lp_gamma += detail::log_normal_kernel(gj, 0.0, scale2 * wj);
                    lp_w += std::log(0.5 * lam * lam) - 0.5 * lam * lam * wj;
                }
            }
        }
    }
    detail::require_finite(lp_gamma, "gamma");
    detail::require_finite(lp_w, "w");
    detail::require_finite(lp_lambda, "lambda");

    double lp_zeta = 0.0;
    for (int d = 0; d < L.D; ++d) lp_zeta += (h.alpha / L.D - 1.0) * std::log(s.zeta[d]);
    detail::require_finite(lp_zeta, "zeta");

    const double lp_tg = (h.a_tau_gamma - 1.0) * std::log(s.tau_gamma) - h.b_tau_gamma * s.tau_gamma;
    detail::require_finite(lp_tg, "tau_gamma");

    return ll + lp_mu + lp_tau2 + lp_sigma + lp_beta + lp_gamma + lp_w + lp_lambda + lp_zeta + lp_tg;
}

inline double log_joint(const ParameterState& s, const Dataset& data, const SofterConfig& cfg,
                        bool integrate_w = false) {
    return log_joint(s, data, cfg, make_layout(cfg), integrate_w);
}

} // namespace softer
