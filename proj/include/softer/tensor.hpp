#pragma once

#include "softer/error.hpp"

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace softer {

using Dims = std::vector<std::size_t>;

// 1-based multi-index (j_1, ..., j_K), matching the external data model.
using MultiIndex = std::vector<std::size_t>;

inline std::size_t dims_product(const Dims& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string dims_to_string(const Dims& dims) {
    std::string s;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (k) s += 'x';
        s += std::to_string(dims[k]);
    }
    return s;
}

/// Dense K-mode tensor of doubles stored in canonical order: the last index
/// varies fastest. This single linearization is used for vectorised slices,
/// design matrices and every file format.
class DenseTensor {
public:
    DenseTensor() = default;

    explicit DenseTensor(Dims dims, double fill = 0.0) : dims_(std::move(dims)) {
        validate_dims(dims_);
        values_.assign(dims_product(dims_), fill);
        compute_strides();
    }

    DenseTensor(Dims dims, std::vector<double> values)
        : dims_(std::move(dims)), values_(std::move(values)) {
        validate_dims(dims_);
        if (values_.size() != dims_product(dims_))
            throw ShapeError("tensor of dims " + dims_to_string(dims_) + " needs " +
                             std::to_string(dims_product(dims_)) + " values, got " +
                             std::to_string(values_.size()));
        compute_strides();
    }

    static DenseTensor ones(const Dims& dims) { return DenseTensor(dims, 1.0); }

    const Dims& dims() const noexcept { return dims_; }
    std::size_t modes() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    std::size_t extent(std::size_t mode0) const { return dims_.at(mode0); }
    // Distance in the linear order between consecutive indices of a mode.
    std::size_t stride(std::size_t mode0) const { return strides_.at(mode0); }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    double operator[](std::size_t linear) const { return values_[linear]; }
    double& operator[](std::size_t linear) { return values_[linear]; }

    std::size_t linear_index(const MultiIndex& idx) const {
        if (idx.size() != dims_.size())
            throw ShapeError("multi-index has " + std::to_string(idx.size()) +
                             " entries for a " + std::to_string(dims_.size()) + "-mode tensor");
        std::size_t lin = 0;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            if (idx[k] < 1 || idx[k] > dims_[k])
                throw ShapeError("index " + std::to_string(idx[k]) + " out of range 1.." +
                                 std::to_string(dims_[k]) + " in mode " + std::to_string(k + 1));
            lin += (idx[k] - 1) * strides_[k];
        }
        return lin;
    }

    MultiIndex multi_index(std::size_t linear) const {
        if (linear >= values_.size()) throw ShapeError("linear index out of range");
        MultiIndex idx(dims_.size());
        for (std::size_t k = 0; k < dims_.size(); ++k)
            idx[k] = (linear / strides_[k]) % dims_[k] + 1;
        return idx;
    }

    // 0-based index along one mode of the entry at a linear position.
    std::size_t mode_index(std::size_t linear, std::size_t mode0) const {
        return (linear / strides_[mode0]) % dims_[mode0];
    }

    double at(const MultiIndex& idx) const { return values_[linear_index(idx)]; }
    void set(const MultiIndex& idx, double v) { values_[linear_index(idx)] = v; }

    bool operator==(const DenseTensor& other) const = default;

private:
    static void validate_dims(const Dims& dims) {
        if (dims.empty()) throw ShapeError("tensor needs at least one mode");
        for (auto p : dims)
            if (p == 0) throw ShapeError("tensor extents must be positive");
    }

    void compute_strides() {
        strides_.assign(dims_.size(), 1);
        for (std::size_t k = dims_.size(); k-- > 1;) strides_[k - 1] = strides_[k] * dims_[k];
    }

    Dims dims_;
    std::vector<double> values_;
    std::vector<std::size_t> strides_;
};

inline void require_same_dims(const DenseTensor& a, const DenseTensor& b, const char* what) {
    if (a.dims() != b.dims())
        throw ShapeError(std::string(what) + ": dims " + dims_to_string(a.dims()) + " vs " +
                         dims_to_string(b.dims()));
}

/// a_1 ⊗ a_2 ⊗ ... ⊗ a_K.
inline DenseTensor outer_product(const std::vector<std::vector<double>>& vectors) {
    if (vectors.empty()) throw ShapeError("outer product of an empty vector list");
    Dims dims;
    for (const auto& v : vectors) {
        if (v.empty()) throw ShapeError("outer product with an empty vector");
        dims.push_back(v.size());
    }
    DenseTensor out(dims, 1.0);
    for (std::size_t lin = 0; lin < out.size(); ++lin) {
        double prod = 1.0;
        for (std::size_t k = 0; k < dims.size(); ++k) prod *= vectors[k][out.mode_index(lin, k)];
        out[lin] = prod;
    }
    return out;
}

inline DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b) {
    require_same_dims(a, b, "hadamard");
    DenseTensor out(a.dims());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline double frobenius_inner(const DenseTensor& a, const DenseTensor& b) {
    require_same_dims(a, b, "frobenius_inner");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// The j-th slice along mode k (both 1-based): a (K-1)-mode tensor. Slicing a
/// vector yields a single-entry 1-mode tensor.
inline DenseTensor mode_slice(const DenseTensor& a, std::size_t mode, std::size_t index) {
    if (mode < 1 || mode > a.modes())
        throw ShapeError("mode " + std::to_string(mode) + " out of range for a " +
                         std::to_string(a.modes()) + "-mode tensor");
    const std::size_t k = mode - 1;
    if (index < 1 || index > a.extent(k))
        throw ShapeError("slice index " + std::to_string(index) + " out of range 1.." +
                         std::to_string(a.extent(k)));
    Dims dims;
    for (std::size_t l = 0; l < a.modes(); ++l)
        if (l != k) dims.push_back(a.extent(l));
    if (dims.empty()) dims.push_back(1);
    DenseTensor out(dims);
    std::size_t pos = 0;
    for (std::size_t lin = 0; lin < a.size(); ++lin)
        if (a.mode_index(lin, k) == index - 1) out[pos++] = a[lin];
    return out;
}

/// Rank-D PARAFAC: sum over components of the outer product of their K
/// factor vectors. factors[d][k] is the mode-k vector of component d.
inline DenseTensor parafac_compose(const std::vector<std::vector<std::vector<double>>>& factors) {
    if (factors.empty()) throw ShapeError("parafac_compose needs at least one component");
    DenseTensor out;
    for (std::size_t d = 0; d < factors.size(); ++d) {
        DenseTensor term = outer_product(factors[d]);
        if (d == 0) {
            out = std::move(term);
            continue;
        }
        if (term.dims() != out.dims())
            throw ShapeError("parafac component " + std::to_string(d + 1) + " has dims " +
                             dims_to_string(term.dims()) + ", expected " +
                             dims_to_string(out.dims()));
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += term[i];
    }
    return out;
}

/// Soft PARAFAC: sum over d of B_1^(d) ∘ ... ∘ B_K^(d).
/// components[d][k] holds B_k^(d); every tensor shares one set of dims.
inline DenseTensor soft_compose(const std::vector<std::vector<DenseTensor>>& components) {
    if (components.empty() || components.front().empty())
        throw ShapeError("soft_compose needs at least one component tensor");
    const Dims& dims = components.front().front().dims();
    DenseTensor out(dims);
    for (const auto& comp : components) {
        if (comp.empty()) throw ShapeError("soft_compose component without mode tensors");
        for (const auto& t : comp)
            if (t.dims() != dims)
                throw ShapeError("soft_compose: dims " + dims_to_string(t.dims()) + " vs " +
                                 dims_to_string(dims));
        for (std::size_t i = 0; i < out.size(); ++i) {
            double prod = 1.0;
            for (const auto& t : comp) prod *= t[i];
            out[i] += prod;
        }
    }
    return out;
}

} // namespace softer
