#pragma once

#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/error.hpp"
#include "softer/layout.hpp"
#include "softer/model.hpp"
#include "softer/random.hpp"
#include "softer/state.hpp"
#include "softer/symmetric.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace softer {

struct NormalParams {
    double mean = 0.0;
    double var = 1.0;
    double log_density(double x) const { return -0.5 * std::log(var) - 0.5 * (x - mean) * (x - mean) / var; }
};

struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;
    double log_density(double x) const { return (shape - 1.0) * std::log(x) - rate * x; }
};

/// Inverse gamma with a scale parameter.
struct InvGammaParams {
    double shape = 1.0;
    double scale = 1.0;
    double log_density(double x) const { return -(shape + 1.0) * std::log(x) - scale / x; }
};

/// Multivariate normal given by its precision matrix.
struct GaussianConditional {
    Eigen::VectorXd mean;
    Eigen::MatrixXd precision;
    double log_density(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd e = x - mean;
        return -0.5 * e.dot(precision * e);
    }
};

/// Running quantities that let conditionals avoid recomposing B:
/// comp(f, d) = ξ_d ∏_k β_k^(d) at free entry f, g = Z comp (per-component
/// contributions to the linear predictor) and r the current residual.
struct ChainWorkspace {
    Eigen::MatrixXd comp;
    Eigen::MatrixXd g;
    Eigen::VectorXd r;
};

namespace detail {

constexpr double variance_floor = 1e-12;

// Draw from N(Q^{-1} rhs, Q^{-1}). One jittered retry if Q is not numerically
// positive definite.
inline Eigen::VectorXd draw_gaussian(const Eigen::MatrixXd& Q, const Eigen::VectorXd& rhs, RngStream& rng,
                                     Eigen::VectorXd* mean_out = nullptr) {
    Eigen::LLT<Eigen::MatrixXd> llt(Q);
    if (llt.info() != Eigen::Success) {
        Eigen::MatrixXd Qj = Q;
        Qj.diagonal().array() += 1e-10 * std::max(1.0, Q.diagonal().cwiseAbs().maxCoeff());
        llt.compute(Qj);
        if (llt.info() != Eigen::Success) throw NumericError("precision matrix is not positive definite");
    }
    const Eigen::VectorXd mean = llt.solve(rhs);
    Eigen::VectorXd z(rhs.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    const Eigen::VectorXd x = mean + llt.matrixU().solve(z);
    if (mean_out) *mean_out = mean;
    return x;
}

inline GaussianConditional gaussian_from(const Eigen::MatrixXd& Q, const Eigen::VectorXd& rhs) {
    GaussianConditional c;
    c.precision = Q;
    c.mean = Q.ldlt().solve(rhs);
    return c;
}

} // namespace detail

/// Gibbs sampler for one (config, dataset) pair. Holds the design pieces
/// shared by every chain; all chain-specific data lives in the
/// ParameterState and ChainWorkspace passed to each call.
class GibbsSampler {
public:
    GibbsSampler(SofterConfig cfg, Dataset data) : cfg_(std::move(cfg)), L_(make_layout(cfg_)) {
        data.validate(cfg_.dims);
        if (!data.predictors.empty() && data.dims() != cfg_.dims)
            throw ShapeError("predictor dims " + dims_to_string(data.dims()) + " differ from config dims " +
                             dims_to_string(cfg_.dims));
        prepare_symmetric_predictors(data, cfg_.symmetry, cfg_.sym_tol);
        n_ = data.n();
        pc_ = data.p_cov();
        y_ = data.y;
        const auto n = static_cast<Eigen::Index>(n_);
        Ct_.resize(n, static_cast<Eigen::Index>(pc_ + 1));
        Ct_.col(0).setOnes();
        if (pc_ > 0) Ct_.rightCols(static_cast<Eigen::Index>(pc_)) = data.covariates;
        CtCt_ = Ct_.transpose() * Ct_;

        const std::size_t F = L_.free_count();
        col_of_.assign(L_.P, F);
        for (std::size_t f = 0; f < F; ++f) col_of_[L_.free_positions[f]] = f;
        Z_.resize(n, static_cast<Eigen::Index>(F));
        for (std::size_t i = 0; i < n_; ++i) {
            const DenseTensor& x = data.predictors[i];
            for (std::size_t f = 0; f < F; ++f) {
                const std::size_t pos = L_.free_positions[f];
                const std::size_t m = L_.mirror[pos];
                Z_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) =
                    (L_.symmetry == Symmetry::none || m == pos) ? x[pos] : x[pos] + x[m];
            }
        }
        slice_cols_.resize(L_.K);
        slice_gram_.resize(L_.K);
        for (std::size_t k = 0; k < L_.K; ++k) {
            slice_cols_[k].resize(L_.dims[k]);
            slice_gram_[k].resize(L_.dims[k]);
            for (std::size_t j = 0; j < L_.dims[k]; ++j) {
                auto& cols = slice_cols_[k][j];
                for (auto pos : L_.slice_free[k][j]) cols.push_back(static_cast<Eigen::Index>(col_of_[pos]));
                const auto m = static_cast<Eigen::Index>(cols.size());
                Eigen::MatrixXd G(m, m);
                for (Eigen::Index a = 0; a < m; ++a)
                    for (Eigen::Index b = 0; b <= a; ++b)
                        G(a, b) = G(b, a) = Z_.col(cols[static_cast<std::size_t>(a)])
                                                .dot(Z_.col(cols[static_cast<std::size_t>(b)]));
                slice_gram_[k][j] = std::move(G);
            }
        }
    }

    const SofterConfig& config() const { return cfg_; }
    const Layout& layout() const { return L_; }
    std::size_t n() const { return n_; }
    std::size_t p_cov() const { return pc_; }
    const Eigen::MatrixXd& design() const { return Z_; }

    // ---- state helpers -------------------------------------------------

    /// Dispersed start: every block drawn from (or set to the mean of) its
    /// prior, μ at the outcome mean.
    ParameterState initial_state(RngStream& rng) const {
        const Hyperparameters& h = cfg_.hyper;
        ParameterState s = blank_state(L_, pc_);
        s.tau2 = 1.0;
        s.mu = n_ > 0 ? y_.mean() : 0.0;
        s.tau_gamma = h.a_tau_gamma / h.b_tau_gamma;
        const double s2 = std::isinf(h.b_sigma) ? 0.0 : h.a_sigma / h.b_sigma;
        s.sigma2.setConstant(s2);
        for (std::size_t g = 0; g < L_.groups(); ++g)
            for (int d = 0; d < L_.D; ++d) {
                const double lam = h.a_lambda / h.b_lambda;
                const double w = 2.0 / (lam * lam);
                Eigen::VectorXd gam(static_cast<Eigen::Index>(L_.group_length[g]));
                for (Eigen::Index j = 0; j < gam.size(); ++j)
                    gam[j] = rng.normal(0.0, std::sqrt(s.tau_gamma * s.zeta[d] * w));
                set_group(s, g, d, gam, Eigen::VectorXd::Constant(gam.size(), w), lam);
            }
        for (std::size_t k = 0; k < L_.K; ++k)
            for (int d = 0; d < L_.D; ++d) {
                const double sd = std::sqrt(s.sigma2[static_cast<Eigen::Index>(k)] * s.zeta[d]);
                auto& beta = s.beta[k][static_cast<std::size_t>(d)];
                const auto& gam = s.gamma[k][static_cast<std::size_t>(d)];
                for (auto pos : L_.free_positions) {
                    const double m = gam[static_cast<Eigen::Index>(L_.mode_index(pos, k))];
                    beta[pos] = L_.hard ? m : rng.normal(m, sd);
                }
            }
        if (L_.symmetry != Symmetry::none) enforce_symmetry(s, L_);
        if (L_.symmetry == Symmetry::symmetric)
            for (auto& x : s.xi) x = rng.uniform() < 0.5 ? 1 : -1;
        return s;
    }

    /// Writes γ, w and λ of group g, component d into every mode of the group.
    void set_group(ParameterState& s, std::size_t g, int d, const Eigen::VectorXd& gamma, const Eigen::VectorXd& w,
                   double lambda) const {
        for (auto k : L_.group_modes[g]) {
            s.gamma[k][static_cast<std::size_t>(d)] = gamma;
            s.w[k][static_cast<std::size_t>(d)] = w;
            s.lambda[k][static_cast<std::size_t>(d)] = lambda;
        }
    }

    /// In hard mode every free β entry equals its row value γ.
    void broadcast_hard(ParameterState& s) const {
        for (std::size_t k = 0; k < L_.K; ++k)
            for (int d = 0; d < L_.D; ++d) {
                auto& beta = s.beta[k][static_cast<std::size_t>(d)];
                const auto& gam = s.gamma[k][static_cast<std::size_t>(d)];
                for (auto pos : L_.free_positions) beta[pos] = gam[static_cast<Eigen::Index>(L_.mode_index(pos, k))];
            }
        if (L_.symmetry != Symmetry::none) enforce_symmetry(s, L_);
    }

    ChainWorkspace workspace(const ParameterState& s) const {
        ChainWorkspace ws;
        refresh(s, ws);
        return ws;
    }

    void refresh(const ParameterState& s, ChainWorkspace& ws) const {
        const std::size_t F = L_.free_count();
        ws.comp.resize(static_cast<Eigen::Index>(F), L_.D);
        for (int d = 0; d < L_.D; ++d) refresh_component(s, d, ws.comp);
        ws.g = Z_ * ws.comp;
        ws.r = y_ - Ct_ * theta(s);
        if (L_.D > 0) ws.r -= ws.g.rowwise().sum();
    }

    // ---- full conditionals ------------------------------------------------

    GaussianConditional mu_delta_conditional(const ParameterState& s, const ChainWorkspace& ws) const {
        const double sd2 = cfg_.hyper.prior_sd_mu_delta * cfg_.hyper.prior_sd_mu_delta;
        Eigen::MatrixXd Q = CtCt_ / s.tau2;
        Q.diagonal().array() += 1.0 / sd2;
        const Eigen::VectorXd rb = ws.r + Ct_ * theta(s);
        const Eigen::VectorXd rhs = Ct_.transpose() * rb / s.tau2;
        return detail::gaussian_from(Q, rhs);
    }

    InvGammaParams tau2_conditional(const ChainWorkspace& ws) const {
        return {cfg_.hyper.a_tau2 + 0.5 * static_cast<double>(n_), cfg_.hyper.b_tau2 + 0.5 * ws.r.squaredNorm()};
    }

    GigParams sigma2_conditional(const ParameterState& s, std::size_t g) const {
        double b = 0.0;
        for (auto k : L_.group_modes[g])
            for (int d = 0; d < L_.D; ++d) b += beta_deviation(s, k, d) / s.zeta[d];
        const double count = static_cast<double>(L_.D * L_.group_modes[g].size() * L_.free_count());
        return {cfg_.hyper.a_sigma - 0.5 * count, 2.0 * cfg_.hyper.b_sigma, b};
    }

    NormalParams gamma_conditional(const ParameterState& s, std::size_t g, int d, std::size_t j) const {
        const auto du = static_cast<std::size_t>(d);
        const std::size_t k0 = L_.group_modes[g].front();
        const double z = s.zeta[d];
        double prec = 1.0 / (s.tau_gamma * z * s.w[k0][du][static_cast<Eigen::Index>(j)]);
        double num = 0.0;
        for (auto k : L_.group_modes[g]) {
            const double v = s.sigma2[static_cast<Eigen::Index>(k)] * z;
            const auto& beta = s.beta[k][du];
            double sum = 0.0;
            for (auto pos : L_.slice_free[k][j]) sum += beta[pos];
            prec += static_cast<double>(L_.slice_free[k][j].size()) / v;
            num += sum / v;
        }
        return {num / prec, 1.0 / prec};
    }

    GigParams tau_gamma_conditional(const ParameterState& s) const {
        double b = 0.0;
        for (std::size_t g = 0; g < L_.groups(); ++g) {
            const std::size_t k0 = L_.group_modes[g].front();
            for (int d = 0; d < L_.D; ++d)
                b += (s.gamma[k0][static_cast<std::size_t>(d)].array().square() /
                      s.w[k0][static_cast<std::size_t>(d)].array())
                         .sum() /
                     s.zeta[d];
        }
        const double count = static_cast<double>(L_.D) * static_cast<double>(L_.total_gamma_length());
        return {cfg_.hyper.a_tau_gamma - 0.5 * count, 2.0 * cfg_.hyper.b_tau_gamma, b};
    }

    /// λ given γ, τ_γ and ζ with the w block integrated out.
    GammaParams lambda_conditional(const ParameterState& s, std::size_t g, int d) const {
        const std::size_t k0 = L_.group_modes[g].front();
        const double sc = std::sqrt(s.tau_gamma * s.zeta[d]);
        return {cfg_.hyper.a_lambda + static_cast<double>(L_.group_length[g]),
                cfg_.hyper.b_lambda + s.gamma[k0][static_cast<std::size_t>(d)].cwiseAbs().sum() / sc};
    }

    GigParams w_conditional(const ParameterState& s, std::size_t g, int d, std::size_t j) const {
        const std::size_t k0 = L_.group_modes[g].front();
        const auto du = static_cast<std::size_t>(d);
        const double lam = s.lambda[k0][du];
        const double gj = s.gamma[k0][du][static_cast<Eigen::Index>(j)];
        return {0.5, lam * lam, gj * gj / (s.tau_gamma * s.zeta[d])};
    }

    GaussianConditional beta_slice_conditional(const ParameterState& s, const ChainWorkspace& ws, std::size_t k,
                                               int d, std::size_t j) const {
        Eigen::MatrixXd Q;
        Eigen::VectorXd rhs, H, cur;
        beta_slice_system(s, ws, k, d, j, Q, rhs, H, cur);
        return detail::gaussian_from(Q, rhs);
    }

    GigParams zeta_conditional(const ParameterState& s, int d) const {
        const Hyperparameters& h = cfg_.hyper;
        double count = static_cast<double>(L_.total_gamma_length());
        double b = 0.0;
        if (!L_.hard) {
            count += static_cast<double>(L_.K * L_.free_count());
            for (std::size_t k = 0; k < L_.K; ++k)
                b += beta_deviation(s, k, d) / s.sigma2[static_cast<Eigen::Index>(k)];
        }
        for (std::size_t g = 0; g < L_.groups(); ++g) {
            const std::size_t k0 = L_.group_modes[g].front();
            const auto du = static_cast<std::size_t>(d);
            b += (s.gamma[k0][du].array().square() / s.w[k0][du].array()).sum() / s.tau_gamma;
        }
        return {h.alpha / L_.D - 0.5 * count, 0.0, b};
    }

    /// Hard mode, unshared group: the whole γ vector of mode k, component d
    /// is Gaussian given everything else.
    GaussianConditional hard_gamma_conditional(const ParameterState& s, const ChainWorkspace& ws, std::size_t g,
                                               int d) const {
        Eigen::MatrixXd Q;
        Eigen::VectorXd rhs;
        hard_block_system(s, ws, g, d, Q, rhs, nullptr);
        return detail::gaussian_from(Q, rhs);
    }

    /// Hard mode, shared (symmetric) group: one entry of γ at a time. The
    /// predictor is linear in each entry because j1 = j2 entries are absent.
    NormalParams hard_gamma_entry_conditional(const ParameterState& s, const ChainWorkspace& ws, std::size_t g,
                                              int d, std::size_t j) const {
        const Eigen::VectorXd phi = hard_entry_direction(s, g, d, j);
        const std::size_t k0 = L_.group_modes[g].front();
        const auto du = static_cast<std::size_t>(d);
        const double gj = s.gamma[k0][du][static_cast<Eigen::Index>(j)];
        const double prec =
            1.0 / (s.tau_gamma * s.zeta[d] * s.w[k0][du][static_cast<Eigen::Index>(j)]) + phi.squaredNorm() / s.tau2;
        const double num = phi.dot(ws.r + phi * gj) / s.tau2;
        return {num / prec, 1.0 / prec};
    }

    /// log P(ξ_d = +1 | ·) − log P(ξ_d = −1 | ·).
    double xi_log_odds(const ParameterState& s, const ChainWorkspace& ws, int d) const {
        const Eigen::VectorXd flipped = ws.r + 2.0 * ws.g.col(d);
        const double here = -0.5 * ws.r.squaredNorm() / s.tau2;
        const double there = -0.5 * flipped.squaredNorm() / s.tau2;
        return s.xi[static_cast<std::size_t>(d)] > 0 ? here - there : there - here;
    }

    // ---- updates ----------------------------------------------------------

    void update_mu_delta(ParameterState& s, ChainWorkspace& ws, RngStream& rng) const {
        const double sd2 = cfg_.hyper.prior_sd_mu_delta * cfg_.hyper.prior_sd_mu_delta;
        Eigen::MatrixXd Q = CtCt_ / s.tau2;
        Q.diagonal().array() += 1.0 / sd2;
        const Eigen::VectorXd old = theta(s);
        const Eigen::VectorXd rb = ws.r + Ct_ * old;
        const Eigen::VectorXd th = detail::draw_gaussian(Q, Ct_.transpose() * rb / s.tau2, rng);
        s.mu = th[0];
        s.delta = th.tail(static_cast<Eigen::Index>(pc_));
        ws.r = rb - Ct_ * th;
    }

    void update_tau2(ParameterState& s, const ChainWorkspace& ws, RngStream& rng) const {
        const InvGammaParams c = tau2_conditional(ws);
        s.tau2 = std::max(rng.inv_gamma(c.shape, c.scale), detail::variance_floor);
    }

    void update_sigma2(ParameterState& s, RngStream& rng) const {
        if (L_.hard) return;
        for (std::size_t g = 0; g < L_.groups(); ++g) {
            const double v = std::max(sample_gig(sigma2_conditional(s, g), rng), detail::variance_floor);
            for (auto k : L_.group_modes[g]) s.sigma2[static_cast<Eigen::Index>(k)] = v;
        }
    }

    /// γ, then τ_γ, then (λ, w) jointly as λ | γ followed by w | λ, γ.
    void update_gamma_block(ParameterState& s, ChainWorkspace& ws, RngStream& rng) const {
        for (std::size_t g = 0; g < L_.groups(); ++g)
            for (int d = 0; d < L_.D; ++d) {
                if (L_.hard)
                    update_hard_gamma(s, ws, g, d, rng);
                else
                    for (std::size_t j = 0; j < L_.group_length[g]; ++j) {
                        const NormalParams c = gamma_conditional(s, g, d, j);
                        const double v = rng.normal(c.mean, std::sqrt(c.var));
                        for (auto k : L_.group_modes[g])
                            s.gamma[k][static_cast<std::size_t>(d)][static_cast<Eigen::Index>(j)] = v;
                    }
            }
        s.tau_gamma = std::max(sample_gig(tau_gamma_conditional(s), rng), detail::variance_floor);
        for (std::size_t g = 0; g < L_.groups(); ++g)
            for (int d = 0; d < L_.D; ++d) {
                const GammaParams lc = lambda_conditional(s, g, d);
                const double lam = rng.gamma(lc.shape, lc.rate);
                for (auto k : L_.group_modes[g]) s.lambda[k][static_cast<std::size_t>(d)] = lam;
                for (std::size_t j = 0; j < L_.group_length[g]; ++j) {
                    const double w = std::max(sample_gig(w_conditional(s, g, d, j), rng), detail::variance_floor);
                    for (auto k : L_.group_modes[g])
                        s.w[k][static_cast<std::size_t>(d)][static_cast<Eigen::Index>(j)] = w;
                }
            }
    }

    void update_beta_slices(ParameterState& s, ChainWorkspace& ws, RngStream& rng) const {
        if (L_.hard) return;
        Eigen::MatrixXd Q;
        Eigen::VectorXd rhs, H, cur;
        for (std::size_t k = 0; k < L_.K; ++k)
            for (int d = 0; d < L_.D; ++d)
                for (std::size_t j = 0; j < L_.dims[k]; ++j) {
                    const auto& cols = slice_cols_[k][j];
                    if (cols.empty()) continue;
                    beta_slice_system(s, ws, k, d, j, Q, rhs, H, cur);
                    const Eigen::VectorXd x = detail::draw_gaussian(Q, rhs, rng);
                    auto& beta = s.beta[k][static_cast<std::size_t>(d)];
                    const auto& pos = L_.slice_free[k][j];
                    for (std::size_t m = 0; m < cols.size(); ++m) {
                        const auto mi = static_cast<Eigen::Index>(m);
                        const double delta = H[mi] * (x[mi] - cur[mi]);
                        beta[pos[m]] = x[mi];
                        ws.comp(cols[m], d) = H[mi] * x[mi];
                        if (delta != 0.0) {
                            ws.r.noalias() -= delta * Z_.col(cols[m]);
                            ws.g.col(d).noalias() += delta * Z_.col(cols[m]);
                        }
                    }
                }
    }

    /// Draws each ζ_d from its giG conditional, then rescales onto the simplex.
    void update_zeta(ParameterState& s, RngStream& rng) const {
        if (L_.D == 1) {
            s.zeta[0] = 1.0;
            return;
        }
        Eigen::VectorXd z(L_.D);
        for (int d = 0; d < L_.D; ++d) z[d] = sample_gig(zeta_conditional(s, d), rng);
        z /= z.sum();
        z = z.cwiseMax(detail::variance_floor);
        s.zeta = z / z.sum();
    }

    void update_xi(ParameterState& s, ChainWorkspace& ws, RngStream& rng) const {
        if (L_.symmetry != Symmetry::symmetric) return;
        for (int d = 0; d < L_.D; ++d) {
            const double lo = xi_log_odds(s, ws, d);
            const double p_plus = 1.0 / (1.0 + std::exp(-lo));
            const int v = rng.uniform() < p_plus ? 1 : -1;
            if (v != s.xi[static_cast<std::size_t>(d)]) {
                s.xi[static_cast<std::size_t>(d)] = v;
                ws.r += 2.0 * ws.g.col(d);
                ws.g.col(d) = -ws.g.col(d);
                ws.comp.col(d) = -ws.comp.col(d);
            }
        }
    }

    /// One full sweep: (μ, δ), τ², σ², γ-block, β slices, symmetry, ζ, ξ.
    /// The workspace is rebuilt from the state first, so a sweep depends
    /// only on (state, rng).
    void sweep(ParameterState& s, RngStream& rng) const {
        ChainWorkspace ws;
        refresh(s, ws);
        run_block("mu/delta", [&] { update_mu_delta(s, ws, rng); });
        run_block("tau2", [&] { update_tau2(s, ws, rng); });
        run_block("sigma2", [&] { update_sigma2(s, rng); });
        run_block("gamma", [&] { update_gamma_block(s, ws, rng); });
        run_block("beta", [&] { update_beta_slices(s, ws, rng); });
        if (L_.symmetry != Symmetry::none) enforce_symmetry(s, L_);
        run_block("zeta", [&] { update_zeta(s, rng); });
        run_block("xi", [&] { update_xi(s, ws, rng); });
        check_finite(s);
    }

private:
    Eigen::VectorXd theta(const ParameterState& s) const {
        Eigen::VectorXd th(static_cast<Eigen::Index>(pc_ + 1));
        th[0] = s.mu;
        if (pc_ > 0) th.tail(static_cast<Eigen::Index>(pc_)) = s.delta;
        return th;
    }

    void refresh_component(const ParameterState& s, int d, Eigen::MatrixXd& comp) const {
        const auto du = static_cast<std::size_t>(d);
        const double sign = s.sign(du);
        for (std::size_t f = 0; f < L_.free_count(); ++f) {
            const std::size_t pos = L_.free_positions[f];
            double v = sign;
            for (std::size_t k = 0; k < L_.K; ++k) v *= s.beta[k][du][pos];
            comp(static_cast<Eigen::Index>(f), d) = v;
        }
    }

    // ξ_d ∏_{l≠k} β_l^(d) at a free position.
    double other_modes(const ParameterState& s, std::size_t k, std::size_t du, std::size_t pos) const {
        double v = s.sign(du);
        for (std::size_t l = 0; l < L_.K; ++l)
            if (l != k) v *= s.beta[l][du][pos];
        return v;
    }

    double beta_deviation(const ParameterState& s, std::size_t k, int d) const {
        const auto du = static_cast<std::size_t>(d);
        const auto& beta = s.beta[k][du];
        const auto& gam = s.gamma[k][du];
        double b = 0.0;
        for (auto pos : L_.free_positions) {
            const double e = beta[pos] - gam[static_cast<Eigen::Index>(L_.mode_index(pos, k))];
            b += e * e;
        }
        return b;
    }

    void beta_slice_system(const ParameterState& s, const ChainWorkspace& ws, std::size_t k, int d, std::size_t j,
                           Eigen::MatrixXd& Q, Eigen::VectorXd& rhs, Eigen::VectorXd& H,
                           Eigen::VectorXd& cur) const {
        const auto du = static_cast<std::size_t>(d);
        const auto& cols = slice_cols_[k][j];
        const auto& pos = L_.slice_free[k][j];
        const auto m = static_cast<Eigen::Index>(cols.size());
        const auto& G = slice_gram_[k][j];
        H.resize(m);
        cur.resize(m);
        Eigen::VectorXd zr(m);
        for (Eigen::Index a = 0; a < m; ++a) {
            H[a] = other_modes(s, k, du, pos[static_cast<std::size_t>(a)]);
            cur[a] = s.beta[k][du][pos[static_cast<std::size_t>(a)]];
            zr[a] = Z_.col(cols[static_cast<std::size_t>(a)]).dot(ws.r);
        }
        const double prior_var = s.sigma2[static_cast<Eigen::Index>(k)] * s.zeta[d];
        const double gj = s.gamma[k][du][static_cast<Eigen::Index>(j)];
        Q = (H * H.transpose()).cwiseProduct(G) / s.tau2;
        Q.diagonal().array() += 1.0 / prior_var;
        const Eigen::VectorXd hb = H.cwiseProduct(cur);
        rhs = H.cwiseProduct(zr + G * hb) / s.tau2;
        rhs.array() += gj / prior_var;
    }

    // Φ[:, j] = Σ_{f in slice j} Z[:, f] ξ ∏_{l≠k} β_l[f] for the single mode of group g.
    void hard_block_system(const ParameterState& s, const ChainWorkspace& ws, std::size_t g, int d,
                           Eigen::MatrixXd& Q, Eigen::VectorXd& rhs, Eigen::MatrixXd* phi_out) const {
        const std::size_t k = L_.group_modes[g].front();
        const auto du = static_cast<std::size_t>(d);
        const auto pk = static_cast<Eigen::Index>(L_.dims[k]);
        Eigen::MatrixXd Phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), pk);
        for (Eigen::Index j = 0; j < pk; ++j) {
            const auto& cols = slice_cols_[k][static_cast<std::size_t>(j)];
            const auto& pos = L_.slice_free[k][static_cast<std::size_t>(j)];
            for (std::size_t m = 0; m < cols.size(); ++m)
                Phi.col(j).noalias() += other_modes(s, k, du, pos[m]) * Z_.col(cols[m]);
        }
        const Eigen::VectorXd& gam = s.gamma[k][du];
        Q = Phi.transpose() * Phi / s.tau2;
        for (Eigen::Index j = 0; j < pk; ++j) Q(j, j) += 1.0 / (s.tau_gamma * s.zeta[d] * s.w[k][du][j]);
        rhs = Phi.transpose() * (ws.r + Phi * gam) / s.tau2;
        if (phi_out) *phi_out = std::move(Phi);
    }

    Eigen::VectorXd hard_entry_direction(const ParameterState& s, std::size_t g, int d, std::size_t j) const {
        const auto du = static_cast<std::size_t>(d);
        Eigen::VectorXd phi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
        for (auto k : L_.group_modes[g]) {
            const auto& cols = slice_cols_[k][j];
            const auto& pos = L_.slice_free[k][j];
            for (std::size_t m = 0; m < cols.size(); ++m)
                phi.noalias() += other_modes(s, k, du, pos[m]) * Z_.col(cols[m]);
        }
        return phi;
    }

    void update_hard_gamma(ParameterState& s, ChainWorkspace& ws, std::size_t g, int d, RngStream& rng) const {
        const auto du = static_cast<std::size_t>(d);
        if (L_.group_modes[g].size() == 1) {
            Eigen::MatrixXd Q, Phi;
            Eigen::VectorXd rhs;
            hard_block_system(s, ws, g, d, Q, rhs, &Phi);
            const std::size_t k = L_.group_modes[g].front();
            const Eigen::VectorXd x = detail::draw_gaussian(Q, rhs, rng);
            const Eigen::VectorXd change = Phi * (x - s.gamma[k][du]);
            s.gamma[k][du] = x;
            ws.r -= change;
            ws.g.col(d) += change;
        } else {
            for (std::size_t j = 0; j < L_.group_length[g]; ++j) {
                const NormalParams c = hard_gamma_entry_conditional(s, ws, g, d, j);
                const Eigen::VectorXd phi = hard_entry_direction(s, g, d, j);
                const std::size_t k0 = L_.group_modes[g].front();
                const double old = s.gamma[k0][du][static_cast<Eigen::Index>(j)];
                const double v = rng.normal(c.mean, std::sqrt(c.var));
                for (auto k : L_.group_modes[g]) {
                    s.gamma[k][du][static_cast<Eigen::Index>(j)] = v;
                    for (auto pos : L_.slice_free[k][j]) s.beta[k][du][pos] = v;
                }
                ws.r -= (v - old) * phi;
                ws.g.col(d) += (v - old) * phi;
            }
        }
        broadcast_hard(s);
        refresh_component(s, d, ws.comp);
    }

    template <class F>
    static void run_block(const char* name, F&& f) {
        try {
            f();
        } catch (const NumericError& e) {
            throw NumericError(std::string(name) + " update failed: " + e.what());
        }
    }

    void check_finite(const ParameterState& s) const {
        auto bad = [](double v) { return !std::isfinite(v); };
        if (bad(s.mu) || !s.delta.allFinite()) throw NumericError("non-finite value in block mu/delta");
        if (bad(s.tau2)) throw NumericError("non-finite value in block tau2");
        if (!s.sigma2.allFinite()) throw NumericError("non-finite value in block sigma2");
        if (!s.zeta.allFinite()) throw NumericError("non-finite value in block zeta");
        if (bad(s.tau_gamma)) throw NumericError("non-finite value in block tau_gamma");
        for (std::size_t k = 0; k < L_.K; ++k)
            for (int d = 0; d < L_.D; ++d) {
                if (!s.gamma[k][static_cast<std::size_t>(d)].allFinite())
                    throw NumericError("non-finite value in block gamma");
                if (!s.w[k][static_cast<std::size_t>(d)].allFinite()) throw NumericError("non-finite value in block w");
                for (double v : s.beta[k][static_cast<std::size_t>(d)].values())
                    if (bad(v)) throw NumericError("non-finite value in block beta");
            }
    }

    SofterConfig cfg_;
    Layout L_;
    std::size_t n_ = 0;
    std::size_t pc_ = 0;
    Eigen::VectorXd y_;
    Eigen::MatrixXd Ct_;
    Eigen::MatrixXd CtCt_;
    Eigen::MatrixXd Z_;
    std::vector<std::size_t> col_of_;
    std::vector<std::vector<std::vector<Eigen::Index>>> slice_cols_;
    std::vector<std::vector<Eigen::MatrixXd>> slice_gram_;
};

/// Thinned post-burn-in draws of one chain plus what is needed to resume it.
struct ChainSamples {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::size_t chain = 0;
    SamplerSettings settings;
    Dims dims;
    std::size_t p_cov = 0;
    int D = 0;

    std::vector<double> mu;
    std::vector<double> tau2;
    std::vector<double> delta;  // draws x p_cov, row-major
    std::vector<double> B;      // draws x ∏dims, row-major
    std::vector<double> sigma2; // draws x K
    std::vector<double> zeta;   // draws x D

    std::size_t completed = 0; // sweeps done
    std::string rng_state;
    nlohmann::json state;

    std::size_t draws() const { return mu.size(); }
    std::size_t entries() const { return dims_product(dims); }

    DenseTensor draw_B(std::size_t t) const {
        const std::size_t P = entries();
        return DenseTensor(dims, std::vector<double>(B.begin() + static_cast<std::ptrdiff_t>(t * P),
                                                     B.begin() + static_cast<std::ptrdiff_t>((t + 1) * P)));
    }

    bool operator==(const ChainSamples&) const = default;
};

struct RunOptions {
    std::function<void(const ChainSamples&)> on_checkpoint;
    const ChainSamples* resume = nullptr;
    std::size_t stop_after = 0; // 0 runs to settings.iterations
};

/// Runs (or resumes) chain `chain` with RngStream(seed, chain).
inline ChainSamples run_chain(const GibbsSampler& sampler, std::size_t chain, const RunOptions& opt = {}) {
    const SofterConfig& cfg = sampler.config();
    const SamplerSettings& st = cfg.sampler;
    RngStream rng(st.seed, chain);
    ChainSamples out;
    ParameterState s;
    if (opt.resume) {
        out = *opt.resume;
        if (out.config_hash != config_hash(cfg)) throw ConfigError("checkpoint was written for a different config");
        if (out.seed != st.seed || out.chain != chain) throw ConfigError("checkpoint seed or chain id differs");
        rng.restore(out.rng_state);
        s = state_from_json(out.state, cfg.dims);
    } else {
        out.config_hash = config_hash(cfg);
        out.seed = st.seed;
        out.chain = chain;
        out.settings = st;
        out.dims = cfg.dims;
        out.p_cov = sampler.p_cov();
        out.D = cfg.hyper.D;
        s = sampler.initial_state(rng);
    }
    out.settings = st;
    const std::size_t last = opt.stop_after > 0 ? std::min(opt.stop_after, st.iterations) : st.iterations;
    for (std::size_t it = out.completed + 1; it <= last; ++it) {
        try {
            sampler.sweep(s, rng);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(it) + ": " + e.what());
        }
        if (it > st.burn_in && (it - st.burn_in) % st.thin == 0) {
            out.mu.push_back(s.mu);
            out.tau2.push_back(s.tau2);
            out.delta.insert(out.delta.end(), s.delta.data(), s.delta.data() + s.delta.size());
            const DenseTensor B = compose_coefficients(s);
            out.B.insert(out.B.end(), B.data().begin(), B.data().end());
            out.sigma2.insert(out.sigma2.end(), s.sigma2.data(), s.sigma2.data() + s.sigma2.size());
            out.zeta.insert(out.zeta.end(), s.zeta.data(), s.zeta.data() + s.zeta.size());
        }
        out.completed = it;
        if (opt.on_checkpoint && st.checkpoint_every > 0 && it % st.checkpoint_every == 0 && it < st.iterations) {
            out.rng_state = rng.state();
            out.state = to_json(s);
            opt.on_checkpoint(out);
        }
    }
    out.rng_state = rng.state();
    out.state = to_json(s);
    return out;
}

inline ChainSamples run_chain_symmetric(const GibbsSampler& sampler, std::size_t chain,
                                        const RunOptions& opt = {}) {
    if (sampler.config().symmetry == Symmetry::none)
        throw ConfigError("run_chain_symmetric needs symmetry = symmetric or semi-symmetric");
    return run_chain(sampler, chain, opt);
}

/// Worker count: SOFTER_THREADS if set, else the hardware concurrency.
inline std::size_t thread_budget() {
    std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SOFTER_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) hw = static_cast<std::size_t>(v);
    }
    return hw;
}

/// All chains of a fit, run in parallel. Results are independent of the
/// thread count.
inline std::vector<ChainSamples> run_chains(const GibbsSampler& sampler, std::size_t threads = 0,
                                            const std::function<void(const ChainSamples&)>& on_checkpoint = {}) {
    const std::size_t C = sampler.config().sampler.chains;
    std::vector<ChainSamples> out(C);
    std::vector<std::exception_ptr> errors(C);
    if (threads == 0) threads = thread_budget();
    threads = std::min(threads, C);
    auto work = [&](std::size_t c) {
        try {
            RunOptions opt;
            opt.on_checkpoint = on_checkpoint;
            out[c] = run_chain(sampler, c, opt);
        } catch (...) {
            errors[c] = std::current_exception();
        }
    };
    if (threads <= 1) {
        for (std::size_t c = 0; c < C; ++c) work(c);
    } else {
        for (std::size_t start = 0; start < C; start += threads) {
            std::vector<std::thread> pool;
            for (std::size_t c = start; c < std::min(C, start + threads); ++c) pool.emplace_back(work, c);
            for (auto& t : pool) t.join();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline std::vector<ChainSamples> fit(const SofterConfig& cfg, const Dataset& data, std::size_t threads = 0) {
    const GibbsSampler sampler(cfg, data);
    return run_chains(sampler, threads);
}

} // namespace softer
