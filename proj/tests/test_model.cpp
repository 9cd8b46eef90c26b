#include "softer/model.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace softer;

namespace {

// Eq.-style triple sum: Σ_j1 Σ_j2 Σ_j3 X_j B_j with B_j = Σ_d Π_k β.
double predictor_by_loops(const ParameterState& s, const Dataset& data, std::size_t i) {
    const Dims& dims = data.dims();
    double v = s.mu;
    for (Eigen::Index c = 0; c < s.delta.size(); ++c) v += data.covariates(static_cast<Eigen::Index>(i), c) * s.delta[c];
    for (std::size_t a = 1; a <= dims[0]; ++a)
        for (std::size_t b = 1; b <= dims[1]; ++b)
            for (std::size_t c = 1; c <= dims[2]; ++c) {
                double bj = 0.0;
                for (std::size_t d = 0; d < s.D(); ++d) {
                    double p = 1.0;
                    for (std::size_t k = 0; k < 3; ++k) p *= s.beta[k][d].at({a, b, c});
                    bj += p;
                }
                v += data.predictors[i].at({a, b, c}) * bj;
            }
    return v;
}

} // namespace

TEST(LinearPredictor, ZeroStateGivesIntercept) {
    RngStream rng(1);
    const Dataset data = fixture::random_dataset({3, 4}, 5, 2, Symmetry::none, rng);
    const SofterConfig cfg = fixture::make_config({3, 4}, 2);
    ParameterState s = blank_state(make_layout(cfg), 2);
    s.mu = 1.25;
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(linear_predictor(s, data, i), 1.25);
}

TEST(LinearPredictor, OnesEverywhere) {
    const Dims dims{2, 3, 2};
    const SofterConfig cfg = fixture::make_config(dims, 1);
    ParameterState s = blank_state(make_layout(cfg), 1);
    for (auto& b : s.beta) b[0] = DenseTensor::ones(dims);
    s.mu = 0.5;
    s.delta[0] = 2.0;
    Eigen::MatrixXd C(1, 1);
    C << 3.0;
    const Dataset data = make_dataset(Eigen::VectorXd::Zero(1), {DenseTensor::ones(dims)}, C);
    EXPECT_EQ(linear_predictor(s, data, 0), 0.5 + 6.0 + 12.0);
}

TEST(LinearPredictor, RandomAgainstTripleSum) {
    RngStream rng(2);
    const Dims dims{3, 2, 4};
    const Dataset data = fixture::random_dataset(dims, 4, 2, Symmetry::none, rng);
    const GibbsSampler smp(fixture::make_config(dims, 3), data);
    const ParameterState s = fixture::random_state(smp, rng);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(linear_predictor(s, data, i), predictor_by_loops(s, data, i), 1e-12);
    EXPECT_THROW(linear_predictor(s, data, 4), ShapeError);
}

TEST(Compose, HardStateEqualsParafacOfGamma) {
    RngStream rng(3);
    const Dims dims{3, 4, 2};
    const Dataset data = fixture::random_dataset(dims, 3, 0, Symmetry::none, rng);
    const GibbsSampler smp(fixture::make_config(dims, 2, Symmetry::none, true), data);
    const ParameterState s = fixture::random_state(smp, rng);
    std::vector<std::vector<std::vector<double>>> f(2);
    for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t k = 0; k < 3; ++k)
            f[d].emplace_back(s.gamma[k][d].data(), s.gamma[k][d].data() + s.gamma[k][d].size());
    EXPECT_EQ(compose_coefficients(s), parafac_compose(f));
}

TEST(LogJoint, DoublingTauSquaredWithZeroResiduals) {
    RngStream rng(4);
    const Dims dims{2, 2};
    const SofterConfig cfg = fixture::make_config(dims, 2);
    Dataset data = fixture::random_dataset(dims, 6, 1, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    for (std::size_t i = 0; i < data.n(); ++i) data.y[static_cast<Eigen::Index>(i)] = linear_predictor(s, data, i);
    ParameterState t = s;
    t.tau2 = 2.0 * s.tau2;
    const double n = static_cast<double>(data.n());
    const auto& h = cfg.hyper;
    const double prior_delta = -(h.a_tau2 + 1.0) * std::log(2.0) - h.b_tau2 / t.tau2 + h.b_tau2 / s.tau2;
    EXPECT_NEAR(log_joint(t, data, cfg) - log_joint(s, data, cfg), -0.5 * n * std::log(2.0) + prior_delta, 1e-10);
}

TEST(LogJoint, SingleGammaEntryRatio) {
    RngStream rng(5);
    const Dims dims{3, 4};
    const SofterConfig cfg = fixture::make_config(dims, 2);
    const Dataset data = fixture::random_dataset(dims, 5, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    for (int rep = 0; rep < 20; ++rep) {
        ParameterState s = fixture::random_state(smp, rng);
        ParameterState t = s;
        const std::size_t k = 1, d = 1, j = 2;
        const double g0 = s.gamma[k][d][j], g1 = g0 + rng.normal();
        t.gamma[k][d][j] = g1;
        // Gaussian prior N(0, τζw) plus the β children N(γ, σ²ζ) on slice j
        const double pv = s.tau_gamma * s.zeta[1] * s.w[k][d][j];
        const double cv = s.sigma2[1] * s.zeta[1];
        double expect = -0.5 * (g1 * g1 - g0 * g0) / pv;
        for (std::size_t a = 0; a < 3; ++a) {
            const double b = s.beta[k][d][a * 4 + j];
            expect += -0.5 * ((b - g1) * (b - g1) - (b - g0) * (b - g0)) / cv;
        }
        EXPECT_NEAR(log_joint(t, data, cfg) - log_joint(s, data, cfg), expect, 1e-9);
    }
}

TEST(LogJoint, HardModeIgnoresBetaBlock) {
    RngStream rng(6);
    const Dims dims{3, 3};
    const SofterConfig hard = fixture::make_config(dims, 2, Symmetry::none, true);
    const Dataset data = fixture::random_dataset(dims, 5, 0, Symmetry::none, rng);
    const GibbsSampler smp(hard, data);
    const ParameterState s = fixture::random_state(smp, rng);
    ParameterState t = s;
    t.sigma2.setConstant(0.123);
    EXPECT_EQ(log_joint(s, data, hard), log_joint(t, data, hard));
}

TEST(LogJoint, NonFiniteNamesBlock) {
    RngStream rng(7);
    const Dims dims{2, 3};
    const SofterConfig cfg = fixture::make_config(dims, 1);
    const Dataset data = fixture::random_dataset(dims, 4, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    s.tau_gamma = -1.0;
    try {
        log_joint(s, data, cfg);
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("gamma"), std::string::npos);
    }
}

TEST(DatasetValidation, MismatchedDimsAndNaN) {
    RngStream rng(8);
    Dataset d = fixture::random_dataset({2, 3}, 3, 1, Symmetry::none, rng);
    EXPECT_NO_THROW(d.validate({2, 3}));
    EXPECT_THROW(d.validate({3, 2}), ShapeError);
    Dataset bad = d;
    bad.predictors[2] = DenseTensor({3, 2});
    EXPECT_THROW(bad.validate(), ShapeError);
    bad = d;
    bad.predictors[1][4] = std::nan("");
    try {
        bad.validate();
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("unit 2, entry 5"), std::string::npos);
    }
    bad = d;
    bad.y.resize(2);
    EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(DatasetValidation, SymmetricIngestion) {
    RngStream rng(9);
    Dataset d = fixture::random_dataset({3, 3}, 2, 0, Symmetry::none, rng);
    EXPECT_THROW(prepare_symmetric_predictors(d, Symmetry::symmetric, 0.0), DataError);
    Dataset s = fixture::random_dataset({3, 3}, 2, 0, Symmetry::symmetric, rng);
    s.predictors[0][0] = 5.0;
    s.predictors[0][1] += 1e-9;
    EXPECT_THROW(prepare_symmetric_predictors(s, Symmetry::symmetric, 0.0), DataError);
    prepare_symmetric_predictors(s, Symmetry::symmetric, 1e-8);
    EXPECT_EQ(s.predictors[0][0], 0.0);
    EXPECT_EQ(s.predictors[0][1], s.predictors[0][3]);
}

TEST(Standardization, RoundTrip) {
    RngStream rng(10);
    Dataset d = fixture::random_dataset({2, 2}, 50, 2, Symmetry::none, rng);
    for (auto& v : d.y) v = 3.0 + 2.0 * v;
    const Standardization st = fit_standardization(d);
    Dataset z = d;
    st.apply(z);
    EXPECT_NEAR(z.y.mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(z.y.squaredNorm() / 49.0), 1.0, 1e-12);
    EXPECT_NEAR(st.to_original_outcome(z.y[7]), d.y[7], 1e-12);
    EXPECT_NEAR(z.covariates.col(1).mean(), 0.0, 1e-12);
}

TEST(StateJson, RoundTripIsExact) {
    RngStream rng(11);
    const Dims dims{3, 3};
    const Dataset data = fixture::random_dataset(dims, 3, 1, Symmetry::symmetric, rng);
    const GibbsSampler smp(fixture::make_config(dims, 2, Symmetry::symmetric), data);
    const ParameterState s = fixture::random_state(smp, rng);
    const ParameterState back = state_from_json(nlohmann::json::parse(to_json(s).dump()), dims);
    EXPECT_EQ(back, s);
    EXPECT_NO_THROW(validate_state(back, smp.layout()));
    EXPECT_THROW(state_from_json(nlohmann::json{{"mu", 1}}, dims), IoError);
}
