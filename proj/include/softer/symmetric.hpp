#pragma once

#include "softer/error.hpp"
#include "softer/layout.hpp"
#include "softer/state.hpp"
#include "softer/tensor.hpp"

#include <vector>

namespace softer {

/// Σ_d ξ_d γ^(d) ⊗ γ^(d) for square matrix coefficients.
inline DenseTensor compose_symmetric_mean(const std::vector<std::vector<double>>& gamma,
                                          const std::vector<int>& xi) {
    if (gamma.empty()) throw ShapeError("need at least one component");
    if (xi.size() != gamma.size()) throw ShapeError("xi and gamma disagree on D");
    const std::size_t R = gamma.front().size();
    DenseTensor out({R, R});
    for (std::size_t d = 0; d < gamma.size(); ++d) {
        if (gamma[d].size() != R) throw ShapeError("gamma vectors differ in length");
        for (std::size_t a = 0; a < R; ++a)
            for (std::size_t b = 0; b < R; ++b) out[a * R + b] += xi[d] * gamma[d][a] * gamma[d][b];
    }
    return out;
}

/// Σ_d γ^(d) ⊗ γ^(d) ⊗ ρ^(d) for R x R x p stacks.
inline DenseTensor compose_semisymmetric_mean(const std::vector<std::vector<double>>& gamma,
                                              const std::vector<std::vector<double>>& rho) {
    if (gamma.empty() || rho.size() != gamma.size()) throw ShapeError("gamma and rho disagree on D");
    DenseTensor out({gamma.front().size(), gamma.front().size(), rho.front().size()});
    for (std::size_t d = 0; d < gamma.size(); ++d) {
        if (gamma[d].size() != out.extent(0) || rho[d].size() != out.extent(2))
            throw ShapeError("component vectors differ in length");
        const DenseTensor t = outer_product({gamma[d], gamma[d], rho[d]});
        for (std::size_t i = 0; i < t.size(); ++i) out[i] += t[i];
    }
    return out;
}

/// Rewrites the non-free entries from the free (strictly lower, j1 > j2)
/// ones: B_2 becomes the mode-1/2 transpose of B_1, B_3 is mirrored onto
/// itself and j1 = j2 entries are zeroed. Free entries are never written, so
/// the operation is idempotent.
inline void enforce_symmetry(ParameterState& s, const Layout& L) {
    if (L.symmetry == Symmetry::none) throw ConfigError("enforce_symmetry needs a symmetric mode");
    for (int d = 0; d < L.D; ++d) {
        const auto du = static_cast<std::size_t>(d);
        DenseTensor& b1 = s.beta[0][du];
        DenseTensor& b2 = s.beta[1][du];
        for (std::size_t pos = 0; pos < L.P; ++pos) {
            if (L.is_free[pos]) continue;
            const std::size_t m = L.mirror[pos];
            if (m == pos) {
                for (std::size_t k = 0; k < L.K; ++k) s.beta[k][du][pos] = 0.0;
                continue;
            }
            b1[pos] = b2[m];
            b2[pos] = b1[m];
            for (std::size_t k = 2; k < L.K; ++k) s.beta[k][du][pos] = s.beta[k][du][m];
        }
    }
}

} // namespace softer
