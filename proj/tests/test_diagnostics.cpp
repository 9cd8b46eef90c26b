#include "softer/diagnostics.hpp"
#include "softer/model.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace softer;

namespace {

// A chain with hand-set draws; every entry of B takes the value f(t, e).
template <class F>
ChainSamples toy_chain(const Dims& dims, std::size_t T, std::size_t p_cov, F&& f) {
    ChainSamples c;
    c.dims = dims;
    c.p_cov = p_cov;
    c.D = 1;
    const std::size_t P = dims_product(dims);
    for (std::size_t t = 0; t < T; ++t) {
        c.mu.push_back(0.0);
        c.tau2.push_back(1.0);
        for (std::size_t j = 0; j < p_cov; ++j) c.delta.push_back(0.0);
        for (std::size_t e = 0; e < P; ++e) c.B.push_back(f(t, e));
    }
    return c;
}

std::vector<double> iota_from(double start, std::size_t n) {
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), start);
    return v;
}

} // namespace

TEST(Psrf, IdenticalChains) {
    const auto a = iota_from(1.0, 20);
    EXPECT_NEAR(psrf({a, a}), std::sqrt(19.0 / 20.0), 1e-15);
    EXPECT_LT(psrf({a, a}), 1.0);
}

TEST(Psrf, ShiftedChainsByHand) {
    // 1..10 against 11..20: W = 55/6, B = 500, n = 10
    EXPECT_NEAR(psrf({iota_from(1.0, 10), iota_from(11.0, 10)}), 2.5208223766353424, 1e-14);
}

TEST(Psrf, Preconditions) {
    EXPECT_THROW(psrf({iota_from(1.0, 20)}), DataError);
    EXPECT_THROW(psrf({iota_from(1.0, 20), iota_from(1.0, 19)}), DataError);
    EXPECT_THROW(psrf({iota_from(1.0, 9), iota_from(1.0, 9)}), DataError);
    // split form accepts one chain: halves 1..10 and 11..20
    EXPECT_NEAR(psrf({iota_from(1.0, 20)}, true), 2.5208223766353424, 1e-14);
    EXPECT_EQ(psrf({std::vector<double>(12, 3.0), std::vector<double>(12, 3.0)}), 1.0);
}

TEST(Psrf, IidChainsNearOne) {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        RngStream rng(seed);
        std::vector<std::vector<double>> ch(2, std::vector<double>(10000));
        for (auto& c : ch)
            for (auto& v : c) v = rng.normal();
        EXPECT_LT(psrf(ch), 1.01) << seed;
    }
}

TEST(Psrf, AffineInvariance) {
    RngStream rng(3);
    std::vector<std::vector<double>> ch(3, std::vector<double>(200));
    for (std::size_t c = 0; c < 3; ++c)
        for (auto& v : ch[c]) v = rng.normal(0.3 * static_cast<double>(c), 1.0);
    const double base = psrf(ch);
    for (double scale : {-2.5, 0.01, 7.0}) {
        auto t = ch;
        for (auto& c : t)
            for (auto& v : c) v = scale * v + 4.0;
        EXPECT_NEAR(psrf(t), base, 1e-10);
    }
}

TEST(Summarize, ConstantDraws) {
    const auto c = toy_chain({2, 2}, 60, 0, [](std::size_t, std::size_t e) { return e == 0 ? 0.0 : 1.5; });
    const FitSummary s = summarize({c});
    EXPECT_EQ(s.posterior_mean_B[1], 1.5);
    EXPECT_EQ(s.ci_lower[1], 1.5);
    EXPECT_EQ(s.ci_upper[1], 1.5);
    EXPECT_EQ(s.selected, (std::vector<char>{0, 1, 1, 1}));
    EXPECT_TRUE(s.psrf.empty());
    EXPECT_FALSE(s.psrf_note.empty());
}

TEST(Summarize, TypeSevenQuantiles) {
    const auto c = toy_chain({1, 2}, 100, 0, [](std::size_t t, std::size_t e) {
        return e == 0 ? static_cast<double>(t + 1) : static_cast<double>(t) - 49.5;
    });
    const FitSummary s = summarize({c});
    EXPECT_NEAR(s.ci_lower[0], 3.475, 1e-12);
    EXPECT_NEAR(s.ci_upper[0], 97.525, 1e-12);
    std::vector<double> draws = iota_from(1.0, 100);
    EXPECT_NEAR(s.ci_lower[0], oracle::quantile7(draws, 0.025), 1e-12);
    EXPECT_EQ(s.selected[0], 1);
    EXPECT_EQ(s.selected[1], 0);
    EXPECT_NEAR(s.posterior_mean_B[1], 0.0, 1e-12);
}

TEST(Summarize, PoolsChainsAndComputesPsrf) {
    RngStream rng(5);
    std::vector<ChainSamples> chains;
    for (int c = 0; c < 2; ++c)
        chains.push_back(toy_chain({3, 3}, 80, 1, [&](std::size_t, std::size_t) { return rng.normal(1.0, 0.1); }));
    const FitSummary s = summarize(chains);
    EXPECT_EQ(s.draws, 160u);
    EXPECT_EQ(s.selected_count(), 9u);
    // mu, delta[1], tau2 and all 9 entries
    EXPECT_EQ(s.psrf.size(), 12u);
    EXPECT_EQ(s.psrf.back().name, "B[3,3]");
    EXPECT_LT(s.max_psrf(), 1.1);
    for (std::size_t e = 0; e < 9; ++e) {
        EXPECT_LE(s.ci_lower[e], s.posterior_mean_B[e]);
        EXPECT_LE(s.posterior_mean_B[e], s.ci_upper[e]);
    }
    const auto j = to_json(s);
    EXPECT_EQ(j["selected"].size(), 9u);
    EXPECT_EQ(j["psrf"].size(), 12u);
}

TEST(Summarize, LevelOneSelectsOnlySignConsistentEntries) {
    RngStream rng(6);
    const auto c = toy_chain({2, 3}, 200, 0, [&](std::size_t t, std::size_t e) {
        if (e == 0) return 0.5 + rng.uniform();
        if (e == 1) return -0.5 - rng.uniform();
        return t == 7 ? -0.01 : 1.0 + rng.uniform();
    });
    const FitSummary s = summarize({c}, {.level = 1.0});
    EXPECT_EQ(s.selected, (std::vector<char>{1, 1, 0, 0, 0, 0}));
}

TEST(Summarize, Preconditions) {
    const auto c = toy_chain({2, 2}, 49, 0, [](std::size_t, std::size_t) { return 1.0; });
    EXPECT_THROW(summarize({c}), DataError);
    EXPECT_THROW(summarize({}), DataError);
    auto d = toy_chain({2, 2}, 60, 0, [](std::size_t, std::size_t) { return 1.0; });
    auto e = toy_chain({4, 1}, 60, 0, [](std::size_t, std::size_t) { return 1.0; });
    EXPECT_THROW(summarize({d, e}), ShapeError);
    EXPECT_THROW(summarize({d}, {.level = 0.0}), ConfigError);
}

TEST(Monitored, StratifiedAndFreeOnly) {
    const auto all = monitored_entries({4, 4}, Symmetry::none);
    EXPECT_EQ(all.size(), 16u);
    const auto big = monitored_entries({20, 20}, Symmetry::none);
    ASSERT_EQ(big.size(), 32u);
    EXPECT_TRUE(std::is_sorted(big.begin(), big.end()));
    EXPECT_EQ(big.front(), 6u);
    const auto sym = monitored_entries({10, 10}, Symmetry::symmetric);
    EXPECT_EQ(sym.size(), 32u);
    for (auto p : sym) EXPECT_GT(p / 10, p % 10);
    const auto semi = monitored_entries({3, 3, 2}, Symmetry::semi_symmetric);
    EXPECT_EQ(semi, (std::vector<std::size_t>{6, 7, 12, 13, 14, 15}));
}

TEST(Predict, ZeroCoefficientsGiveMeanIntercept) {
    auto c = toy_chain({2, 2}, 4, 1, [](std::size_t, std::size_t) { return 0.0; });
    c.mu = {1.0, 2.0, 3.0, 6.0};
    RngStream rng(7);
    const Dataset data = fixture::random_dataset({2, 2}, 5, 1, Symmetry::none, rng);
    const Eigen::VectorXd p = predict({c}, data);
    for (Eigen::Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(p[i], 3.0);
}

TEST(Predict, SingleDrawEqualsLinearPredictor) {
    RngStream rng(8);
    const Dims dims{3, 4};
    const Dataset data = fixture::random_dataset(dims, 6, 2, Symmetry::none, rng);
    const GibbsSampler smp(fixture::make_config(dims, 2), data);
    const ParameterState s = fixture::random_state(smp, rng);
    const DenseTensor B = compose_coefficients(s);
    auto c = toy_chain(dims, 1, 2, [&](std::size_t, std::size_t e) { return B[e]; });
    c.mu = {s.mu};
    c.delta = {s.delta[0], s.delta[1]};
    const Eigen::VectorXd p = predict({c}, data);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(p[static_cast<Eigen::Index>(i)], linear_predictor(s, data, i), 1e-12);
}

TEST(Predict, TenDrawAveragingOracle) {
    RngStream rng(9);
    const Dims dims{2, 3};
    const Dataset data = fixture::random_dataset(dims, 4, 1, Symmetry::none, rng);
    std::vector<ChainSamples> chains;
    for (int k = 0; k < 2; ++k) {
        auto c = toy_chain(dims, 5, 1, [&](std::size_t, std::size_t) { return rng.normal(); });
        for (std::size_t t = 0; t < 5; ++t) {
            c.mu[t] = rng.normal();
            c.delta[t] = rng.normal();
        }
        chains.push_back(c);
    }
    const Eigen::VectorXd p = predict(chains, data);
    for (std::size_t i = 0; i < 4; ++i) {
        double acc = 0.0;
        for (const auto& c : chains)
            for (std::size_t t = 0; t < 5; ++t) {
                double v = c.mu[t] + data.covariates(static_cast<Eigen::Index>(i), 0) * c.delta[t];
                for (std::size_t e = 0; e < 6; ++e) v += data.predictors[i][e] * c.B[t * 6 + e];
                acc += v;
            }
        EXPECT_NEAR(p[static_cast<Eigen::Index>(i)], acc / 10.0, 1e-12);
    }
}

TEST(Predict, LinearInPredictorAndShapeChecked) {
    RngStream rng(10);
    const Dims dims{3, 3};
    const auto c = toy_chain(dims, 3, 0, [&](std::size_t, std::size_t) { return rng.normal(); });
    const Dataset a = fixture::random_dataset(dims, 3, 0, Symmetry::none, rng);
    const Dataset b = fixture::random_dataset(dims, 3, 0, Symmetry::none, rng);
    Dataset sum = a;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t e = 0; e < 9; ++e) sum.predictors[i][e] += b.predictors[i][e];
    const Eigen::VectorXd lhs = predict({c}, sum), rhs = predict({c}, a) + predict({c}, b);
    EXPECT_NEAR((lhs - rhs).norm(), 0.0, 1e-12);
    EXPECT_THROW(predict({c}, fixture::random_dataset({3, 4}, 2, 0, Symmetry::none, rng)), ShapeError);
    EXPECT_THROW(predict({c}, fixture::random_dataset(dims, 2, 1, Symmetry::none, rng)), ShapeError);
}
