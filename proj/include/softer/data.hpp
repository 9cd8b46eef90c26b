#pragma once

#include "softer/config.hpp"
#include "softer/error.hpp"
#include "softer/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace softer {

/// Outcomes, scalar covariates (n x p, p may be 0) and tensor predictors.
struct Dataset {
    Eigen::VectorXd y;
    Eigen::MatrixXd covariates;
    std::vector<DenseTensor> predictors;

    std::size_t n() const { return static_cast<std::size_t>(y.size()); }
    std::size_t p_cov() const { return static_cast<std::size_t>(covariates.cols()); }
    const Dims& dims() const {
        if (predictors.empty()) throw ShapeError("dataset has no predictors to take dims from");
        return predictors.front().dims();
    }

    // Shape and finiteness checks. expected_dims may be empty for "any".
    void validate(const Dims& expected_dims = {}) const {
        const auto n_units = static_cast<Eigen::Index>(predictors.size());
        if (y.size() != n_units)
            throw ShapeError("dataset has " + std::to_string(y.size()) + " outcomes but " +
                             std::to_string(predictors.size()) + " predictors");
        if (covariates.rows() != n_units && !(covariates.size() == 0 && covariates.cols() == 0))
            throw ShapeError("covariate matrix has " + std::to_string(covariates.rows()) +
                             " rows for " + std::to_string(predictors.size()) + " units");
        for (std::size_t i = 0; i < predictors.size(); ++i) {
            const Dims& ref = expected_dims.empty() ? predictors.front().dims() : expected_dims;
            if (predictors[i].dims() != ref)
                throw ShapeError("predictor " + std::to_string(i + 1) + " has dims " +
                                 dims_to_string(predictors[i].dims()) + ", expected " +
                                 dims_to_string(ref));
            const auto vals = predictors[i].values();
            for (std::size_t e = 0; e < vals.size(); ++e)
                if (!std::isfinite(vals[e]))
                    throw DataError("non-finite predictor entry at unit " + std::to_string(i + 1) +
                                    ", entry " + std::to_string(e + 1));
            if (!std::isfinite(y[static_cast<Eigen::Index>(i)]))
                throw DataError("non-finite outcome at unit " + std::to_string(i + 1));
        }
        for (Eigen::Index i = 0; i < covariates.rows(); ++i)
            for (Eigen::Index c = 0; c < covariates.cols(); ++c)
                if (!std::isfinite(covariates(i, c)))
                    throw DataError("non-finite covariate at unit " + std::to_string(i + 1) +
                                    ", column " + std::to_string(c + 1));
    }
};

inline Dataset make_dataset(Eigen::VectorXd y, std::vector<DenseTensor> predictors,
                            Eigen::MatrixXd covariates = {}) {
    Dataset d;
    d.y = std::move(y);
    d.predictors = std::move(predictors);
    d.covariates = covariates.size() == 0
                       ? Eigen::MatrixXd(static_cast<Eigen::Index>(d.predictors.size()), 0)
                       : std::move(covariates);
    d.validate();
    return d;
}

/// Checks that every predictor is symmetric in its first two modes (within
/// tol), replaces each (j1, j2)/(j2, j1) pair by its average and zeroes the
/// j1 = j2 entries, which carry no information in network predictors.
inline void prepare_symmetric_predictors(Dataset& data, Symmetry symmetry, double tol) {
    if (symmetry == Symmetry::none) return;
    for (std::size_t i = 0; i < data.predictors.size(); ++i) {
        DenseTensor& x = data.predictors[i];
        if (x.modes() < 2 || x.extent(0) != x.extent(1))
            throw ShapeError("symmetric modes need predictors that are square in modes 1-2");
        const std::size_t R = x.extent(0);
        const std::size_t inner = x.size() / (R * R);
        for (std::size_t a = 0; a < R; ++a)
            for (std::size_t b = 0; b < R; ++b)
                for (std::size_t l = 0; l < inner; ++l) {
                    const std::size_t s = (a * R + b) * inner + l;
                    if (a == b) {
                        x[s] = 0.0;
                        continue;
                    }
                    const std::size_t t = (b * R + a) * inner + l;
                    if (std::abs(x[s] - x[t]) > tol)
                        throw DataError("predictor " + std::to_string(i + 1) +
                                        " is not symmetric at (" + std::to_string(a + 1) + "," +
                                        std::to_string(b + 1) + ")");
                    if (a > b) x[s] = x[t] = 0.5 * (x[s] + x[t]);
                }
    }
}

/// Affine standardization of outcome and covariates plus a common scale for
/// predictor entries. Predictions on the standardized scale map back through
/// to_original_outcome.
struct Standardization {
    bool applied = false;
    double y_mean = 0.0;
    double y_sd = 1.0;
    std::vector<double> cov_mean;
    std::vector<double> cov_sd;
    double x_sd = 1.0;

    double to_original_outcome(double v) const { return applied ? y_mean + y_sd * v : v; }

    void apply(Dataset& d, bool outcome_too = true) const {
        if (!applied) return;
        if (outcome_too)
            for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y[i] = (d.y[i] - y_mean) / y_sd;
        for (Eigen::Index c = 0; c < d.covariates.cols(); ++c)
            for (Eigen::Index i = 0; i < d.covariates.rows(); ++i)
                d.covariates(i, c) = (d.covariates(i, c) - cov_mean[static_cast<std::size_t>(c)]) /
                                     cov_sd[static_cast<std::size_t>(c)];
        for (auto& x : d.predictors)
            for (auto& v : x.values()) v /= x_sd;
    }
};

inline Standardization fit_standardization(const Dataset& d) {
    Standardization s;
    s.applied = true;
    const double n = static_cast<double>(d.n());
    if (d.n() < 2) throw DataError("standardization needs at least two units");
    auto sd_of = [n](double sum, double sumsq) {
        const double var = (sumsq - sum * sum / n) / (n - 1.0);
        return var > 0.0 ? std::sqrt(var) : 1.0;
    };
    s.y_mean = d.y.mean();
    s.y_sd = sd_of(d.y.sum(), d.y.squaredNorm());
    for (Eigen::Index c = 0; c < d.covariates.cols(); ++c) {
        const auto col = d.covariates.col(c);
        s.cov_mean.push_back(col.mean());
        s.cov_sd.push_back(sd_of(col.sum(), col.squaredNorm()));
    }
    double sum = 0.0, sumsq = 0.0, count = 0.0;
    for (const auto& x : d.predictors)
        for (double v : x.values()) {
            sum += v;
            sumsq += v * v;
            count += 1.0;
        }
    const double var = count > 1 ? (sumsq - sum * sum / count) / (count - 1.0) : 1.0;
    s.x_sd = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
}

} // namespace softer
