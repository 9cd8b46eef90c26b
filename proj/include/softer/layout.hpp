#pragma once

#include "softer/config.hpp"
#include "softer/tensor.hpp"

#include <cstddef>
#include <vector>

namespace softer {

/// Which coefficient entries are free parameters and how the γ vectors are
/// shared across modes.
///
/// Without symmetry every entry of every B_k^(d) is free and mode k owns its
/// own γ_k^(d). In the symmetric variants only strictly-lower entries
/// (j1 > j2) are free; the upper triangle mirrors them and the j1 = j2
/// entries are fixed at zero. Modes 1 and 2 then share one γ^(d) (one
/// "group"), and an entry's contribution to ⟨X, B⟩ counts twice.
struct Layout {
    Dims dims;
    std::size_t K = 0;
    std::size_t P = 0;
    int D = 0;
    Symmetry symmetry = Symmetry::none;
    bool hard = false;

    std::vector<std::size_t> strides;
    std::vector<std::size_t> group_of_mode;
    std::vector<std::vector<std::size_t>> group_modes;
    std::vector<std::size_t> group_length;

    std::vector<std::size_t> free_positions;
    std::vector<char> is_free;
    std::vector<double> multiplicity;
    std::vector<std::size_t> mirror;
    // slice_free[k][j]: free positions whose mode-k index is j.
    std::vector<std::vector<std::vector<std::size_t>>> slice_free;

    std::size_t groups() const { return group_modes.size(); }
    bool leader(std::size_t k) const { return group_modes[group_of_mode[k]].front() == k; }
    std::size_t mode_index(std::size_t s, std::size_t k) const { return (s / strides[k]) % dims[k]; }
    std::size_t free_count() const { return free_positions.size(); }
    std::size_t total_gamma_length() const {
        std::size_t t = 0;
        for (auto l : group_length) t += l;
        return t;
    }
};

inline Layout make_layout(const SofterConfig& cfg) {
    cfg.validate();
    Layout L;
    L.dims = cfg.dims;
    L.K = cfg.dims.size();
    L.P = dims_product(cfg.dims);
    L.D = cfg.hyper.D;
    L.symmetry = cfg.symmetry;
    L.hard = cfg.hard_mode;

    L.strides.assign(L.K, 1);
    for (std::size_t k = L.K; k-- > 1;) L.strides[k - 1] = L.strides[k] * L.dims[k];

    if (L.symmetry == Symmetry::none) {
        for (std::size_t k = 0; k < L.K; ++k) {
            L.group_of_mode.push_back(k);
            L.group_modes.push_back({k});
            L.group_length.push_back(L.dims[k]);
        }
    } else {
        L.group_of_mode = {0, 0};
        L.group_modes.push_back({0, 1});
        L.group_length.push_back(L.dims[0]);
        for (std::size_t k = 2; k < L.K; ++k) {
            L.group_of_mode.push_back(L.group_modes.size());
            L.group_modes.push_back({k});
            L.group_length.push_back(L.dims[k]);
        }
    }

    L.is_free.assign(L.P, 0);
    L.multiplicity.assign(L.P, 0.0);
    L.mirror.resize(L.P);
    for (std::size_t s = 0; s < L.P; ++s) {
        if (L.symmetry == Symmetry::none) {
            L.mirror[s] = s;
            L.is_free[s] = 1;
            L.multiplicity[s] = 1.0;
        } else {
            const std::size_t a = L.mode_index(s, 0);
            const std::size_t b = L.mode_index(s, 1);
            L.mirror[s] = s + b * L.strides[0] + a * L.strides[1] - a * L.strides[0] - b * L.strides[1];
            if (a > b) {
                L.is_free[s] = 1;
                L.multiplicity[s] = 2.0;
            }
        }
        if (L.is_free[s]) L.free_positions.push_back(s);
    }

    L.slice_free.resize(L.K);
    for (std::size_t k = 0; k < L.K; ++k) {
        L.slice_free[k].resize(L.dims[k]);
        for (auto s : L.free_positions) L.slice_free[k][L.mode_index(s, k)].push_back(s);
    }
    return L;
}

} // namespace softer
