#pragma once

#include "softer/config.hpp"
#include "softer/data.hpp"
#include "softer/layout.hpp"
#include "softer/random.hpp"
#include "softer/sampler.hpp"
#include "softer/state.hpp"
#include "softer/symmetric.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace fixture {

using namespace softer;

inline DenseTensor random_predictor(const Dims& dims, Symmetry sym, RngStream& rng) {
    DenseTensor x(dims);
    for (auto& v : x.values()) v = rng.normal();
    if (sym != Symmetry::none) {
        const std::size_t R = dims[0], inner = x.size() / (R * R);
        for (std::size_t a = 0; a < R; ++a)
            for (std::size_t b = 0; b < R; ++b)
                for (std::size_t l = 0; l < inner; ++l) {
                    const std::size_t s = (a * R + b) * inner + l;
                    if (a == b) x[s] = 0.0;
                    if (a < b) x[s] = x[(b * R + a) * inner + l];
                }
    }
    return x;
}

inline Dataset random_dataset(const Dims& dims, std::size_t n, std::size_t p_cov, Symmetry sym, RngStream& rng) {
    std::vector<DenseTensor> xs;
    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    Eigen::MatrixXd C(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p_cov));
    for (std::size_t i = 0; i < n; ++i) {
        xs.push_back(random_predictor(dims, sym, rng));
        y[static_cast<Eigen::Index>(i)] = rng.normal();
        for (std::size_t c = 0; c < p_cov; ++c) C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rng.normal();
    }
    Dataset d;
    d.y = y;
    d.covariates = C;
    d.predictors = std::move(xs);
    return d;
}

inline SofterConfig make_config(const Dims& dims, int D, Symmetry sym = Symmetry::none, bool hard = false) {
    SofterConfig c = default_config(dims, D);
    c.symmetry = sym;
    c.hard_mode = hard;
    if (hard) c.hyper.b_sigma = std::numeric_limits<double>::infinity();
    c.sampler.iterations = 200;
    c.sampler.burn_in = 100;
    c.sampler.chains = 2;
    return c;
}

// A random point of the parameter space respecting every structural
// constraint (shared groups, mirrors, hard-mode broadcast).
inline ParameterState random_state(const GibbsSampler& smp, RngStream& rng) {
    const Layout& L = smp.layout();
    ParameterState s = blank_state(L, smp.p_cov());
    s.mu = rng.normal();
    for (Eigen::Index c = 0; c < s.delta.size(); ++c) s.delta[c] = rng.normal();
    s.tau2 = 0.3 + 2.0 * rng.uniform();
    s.tau_gamma = 0.2 + rng.uniform();
    double tot = 0.0;
    for (int d = 0; d < L.D; ++d) tot += (s.zeta[d] = 0.2 + rng.uniform());
    s.zeta /= tot;
    for (std::size_t g = 0; g < L.groups(); ++g) {
        const double s2 = L.hard ? 0.0 : 0.05 + 0.5 * rng.uniform();
        for (auto k : L.group_modes[g]) s.sigma2[static_cast<Eigen::Index>(k)] = s2;
        for (int d = 0; d < L.D; ++d) {
            Eigen::VectorXd gam(static_cast<Eigen::Index>(L.group_length[g])), w(gam.size());
            for (Eigen::Index j = 0; j < gam.size(); ++j) {
                gam[j] = rng.normal(0.0, 0.8);
                w[j] = 0.2 + rng.uniform();
            }
            smp.set_group(s, g, d, gam, w, 0.5 + 2.0 * rng.uniform());
        }
    }
    for (std::size_t k = 0; k < L.K; ++k)
        for (int d = 0; d < L.D; ++d) {
            auto& beta = s.beta[k][static_cast<std::size_t>(d)];
            for (auto pos : L.free_positions)
                beta[pos] = s.gamma[k][static_cast<std::size_t>(d)][static_cast<Eigen::Index>(L.mode_index(pos, k))] +
                            (L.hard ? 0.0 : rng.normal(0.0, 0.3));
        }
    if (L.symmetry != Symmetry::none) enforce_symmetry(s, L);
    if (L.symmetry == Symmetry::symmetric)
        for (auto& x : s.xi) x = rng.uniform() < 0.5 ? 1 : -1;
    return s;
}

} // namespace fixture
