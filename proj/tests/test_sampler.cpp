#include "softer/model.hpp"
#include "softer/sampler.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"
#include "ratio_checks.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace softer;

namespace {

constexpr int kStates = 100;

class RatioTest : public ::testing::TestWithParam<std::tuple<std::size_t, ratio::Block>> {};

} // namespace

TEST_P(RatioTest, ConditionalMatchesJoint) {
    const auto [ci, block] = GetParam();
    const ratio::Case& c = ratio::cases()[ci];
    if (!ratio::applies(block, c)) GTEST_SKIP() << ratio::name(block) << " is not a block of this variant";
    const ratio::Fixture f(c);
    int n = 0;
    ratio::run(block, f, kStates, [&](double cond, double joint) {
        EXPECT_NEAR(cond, joint, 1e-8 * std::max(1.0, std::abs(joint)));
        ++n;
    });
    EXPECT_EQ(n, kStates);
}

INSTANTIATE_TEST_SUITE_P(AllVariants, RatioTest,
                         ::testing::Combine(::testing::Range<std::size_t>(0, ratio::cases().size()),
                                            ::testing::ValuesIn(ratio::blocks())),
                         [](const auto& info) {
                             return "case" + std::to_string(std::get<0>(info.param)) + "_" +
                                    ratio::name(std::get<1>(info.param));
                         });

// ---- specific conditionals -------------------------------------------

TEST(MuDelta, HandInversion) {
    // n = 3, one covariate: Σ* = (I + C̃ᵀC̃/τ²)^{-1}, μ* = Σ* C̃ᵀ R_B / τ²
    const Dims dims{2, 2};
    SofterConfig cfg = fixture::make_config(dims, 1);
    Eigen::MatrixXd C(3, 1);
    C << 1.0, -1.0, 2.0;
    Eigen::VectorXd y(3);
    y << 1.0, 2.0, 3.0;
    const Dataset data = make_dataset(y, {DenseTensor(dims), DenseTensor(dims), DenseTensor(dims)}, C);
    const GibbsSampler smp(cfg, data);
    RngStream rng(1);
    ParameterState s = smp.initial_state(rng);
    s.tau2 = 2.0;
    const auto c = smp.mu_delta_conditional(s, smp.workspace(s));
    // C̃ᵀC̃ = [[3, 2], [2, 6]], C̃ᵀy = [6, 5]
    const double a = 1 + 3 / 2.0, b = 2 / 2.0, d = 1 + 6 / 2.0;
    const double det = a * d - b * b;
    const double r0 = 6 / 2.0, r1 = 5 / 2.0;
    EXPECT_NEAR(c.mean[0], (d * r0 - b * r1) / det, 1e-12);
    EXPECT_NEAR(c.mean[1], (-b * r0 + a * r1) / det, 1e-12);
    EXPECT_NEAR(c.precision(0, 0), a, 1e-12);
    EXPECT_NEAR(c.precision(0, 1), b, 1e-12);
}

TEST(MuDelta, PriorWhenNoDataOrHugeNoise) {
    const Dims dims{2, 2};
    SofterConfig cfg = fixture::make_config(dims, 1);
    const Dataset empty = make_dataset(Eigen::VectorXd(0), {}, Eigen::MatrixXd(0, 0));
    const GibbsSampler smp(cfg, empty);
    RngStream rng(2);
    ParameterState s = smp.initial_state(rng);
    auto c = smp.mu_delta_conditional(s, smp.workspace(s));
    EXPECT_EQ(c.mean[0], 0.0);
    EXPECT_EQ(c.precision(0, 0), 1.0);

    RngStream r2(3);
    const Dataset data = fixture::random_dataset(dims, 10, 2, Symmetry::none, r2);
    const GibbsSampler smp2(cfg, data);
    ParameterState t = smp2.initial_state(r2);
    t.tau2 = 1e12;
    c = smp2.mu_delta_conditional(t, smp2.workspace(t));
    EXPECT_NEAR((c.precision - Eigen::MatrixXd::Identity(3, 3)).norm(), 0.0, 1e-9);
}

TEST(Tau2, ConditionalForms) {
    const Dims dims{2, 2};
    SofterConfig cfg = fixture::make_config(dims, 1);
    RngStream rng(4);
    const Dataset data = fixture::random_dataset(dims, 6, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    ChainWorkspace ws = smp.workspace(s);
    ws.r.setZero();
    auto c = smp.tau2_conditional(ws);
    EXPECT_EQ(c.shape, cfg.hyper.a_tau2 + 3.0);
    EXPECT_EQ(c.scale, cfg.hyper.b_tau2);

    ws = smp.workspace(s);
    c = smp.tau2_conditional(ws);
    double ssr = 0.0;
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double e = data.y[static_cast<Eigen::Index>(i)] - linear_predictor(s, data, i);
        ssr += e * e;
    }
    EXPECT_NEAR(c.scale, cfg.hyper.b_tau2 + ssr / 2.0, 1e-10);
    RngStream r(5);
    double m = 0.0;
    const int N = 100000;
    for (int i = 0; i < N; ++i) {
        smp.update_tau2(s, ws, r);
        m += s.tau2;
    }
    m /= N;
    const double mean = c.scale / (c.shape - 1.0);
    const double sd = mean / std::sqrt(c.shape - 2.0);
    EXPECT_LT(std::abs(m - mean), 4.0 * sd / std::sqrt(N));
}

TEST(Sigma2, BetaEqualGammaGivesGammaLimit) {
    const Dims dims{2, 3};
    SofterConfig cfg = fixture::make_config(dims, 2);
    RngStream rng(6);
    const Dataset data = fixture::random_dataset(dims, 4, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t pos = 0; pos < 6; ++pos)
                s.beta[k][d][pos] = s.gamma[k][d][static_cast<Eigen::Index>(smp.layout().mode_index(pos, k))];
    const GigParams c = smp.sigma2_conditional(s, 0);
    EXPECT_EQ(c.b, 0.0);
    EXPECT_EQ(c.p, cfg.hyper.a_sigma - 2.0 * 6.0 / 2.0);
    // one deviation ε with ζ = 1
    SofterConfig one = fixture::make_config(dims, 1);
    const GibbsSampler smp1(one, data);
    ParameterState t = fixture::random_state(smp1, rng);
    for (std::size_t pos = 0; pos < 6; ++pos)
        t.beta[0][0][pos] = t.gamma[0][0][static_cast<Eigen::Index>(smp1.layout().mode_index(pos, 0))];
    t.beta[0][0][4] += 0.25;
    EXPECT_NEAR(smp1.sigma2_conditional(t, 0).b, 0.0625, 1e-15);
}

TEST(GammaConditional, ZeroBetaSumsGiveZeroMean) {
    const Dims dims{3, 3};
    SofterConfig cfg = fixture::make_config(dims, 1);
    RngStream rng(7);
    const Dataset data = fixture::random_dataset(dims, 4, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    for (auto& b : s.beta[0]) b = DenseTensor(dims);
    EXPECT_EQ(smp.gamma_conditional(s, 0, 0, 1).mean, 0.0);
}

TEST(GammaConditional, SingleObservationShrinkage) {
    // with p_l = 1 for l ≠ k each slice holds one β
    const Dims dims{4, 1};
    SofterConfig cfg = fixture::make_config(dims, 1);
    RngStream rng(8);
    const Dataset data = fixture::random_dataset(dims, 4, 0, Symmetry::none, rng);
    const GibbsSampler smp(cfg, data);
    ParameterState s = fixture::random_state(smp, rng);
    const double prior_var = s.tau_gamma * s.zeta[0] * s.w[0][0][2];
    const double lik_var = s.sigma2[0] * s.zeta[0];
    const NormalParams c = smp.gamma_conditional(s, 0, 0, 2);
    EXPECT_NEAR(c.mean, s.beta[0][0][2] * prior_var / (prior_var + lik_var), 1e-14);
    EXPECT_NEAR(c.var, prior_var * lik_var / (prior_var + lik_var), 1e-14);
}

TEST(BetaSlice, HandComputedTwoByTwo) {
    // K = 2, p = 2x2, n = 1, every other parameter 1: slice j of mode 1 is
    // row j with H = β_2 entries = 1, G = x_jᵀ x_j
    const Dims dims{2, 2};
    SofterConfig cfg = fixture::make_config(dims, 1);
    const Dataset data = make_dataset((Eigen::VectorXd(1) << 2.0).finished(),
                                      {DenseTensor(dims, std::vector<double>{1.0, 2.0, 3.0, 4.0})});
    const GibbsSampler smp(cfg, data);
    ParameterState s = blank_state(smp.layout(), 0);
    for (auto& b : s.beta) b[0] = DenseTensor::ones(dims);
    s.gamma[0][0].setOnes();
    s.gamma[1][0].setOnes();
    s.sigma2.setOnes();
    s.tau2 = 1.0;
    s.mu = 0.0;
    const auto c = smp.beta_slice_conditional(s, smp.workspace(s), 0, 0, 0);
    // residual excluding row 1: 2 - (3 + 4) = -5; x = (1, 2)
    Eigen::Matrix2d Q;
    Q << 1 + 1, 2, 2, 1 + 4;
    const Eigen::Vector2d rhs(1 + 1 * -5.0, 1 + 2 * -5.0);
    const Eigen::Vector2d mean = Q.inverse() * rhs;
    EXPECT_NEAR((c.precision - Eigen::MatrixXd(Q)).norm(), 0.0, 1e-14);
    EXPECT_NEAR((c.mean - Eigen::VectorXd(mean)).norm(), 0.0, 1e-12);
}

TEST(BetaSlice, NoDataDrawsFromPriorAndUpdateIsLocal) {
    const Dims dims{3, 2};
    SofterConfig cfg = fixture::make_config(dims, 2);
    const Dataset empty = make_dataset(Eigen::VectorXd(0), {}, Eigen::MatrixXd(0, 0));
    const GibbsSampler smp(cfg, empty);
    RngStream rng(9);
    ParameterState s = fixture::random_state(smp, rng);
    const auto c = smp.beta_slice_conditional(s, smp.workspace(s), 0, 1, 2);
    for (Eigen::Index i = 0; i < c.mean.size(); ++i) {
        EXPECT_NEAR(c.mean[i], s.gamma[0][1][2], 1e-15);
        EXPECT_NEAR(c.precision(i, i), 1.0 / (s.sigma2[0] * s.zeta[1]), 1e-12);
    }
    // a full β sweep touches every slice; a single-slice draw touches one
    ParameterState t = s;
    ChainWorkspace ws = smp.workspace(t);
    const ParameterState before = t;
    smp.update_beta_slices(t, ws, rng);
    EXPECT_NE(t.beta[0][0], before.beta[0][0]);
    EXPECT_EQ(t.gamma, before.gamma);
}

TEST(Zeta, SimplexOutputAndSingleComponent) {
    const Dims dims{3, 3};
    RngStream rng(10);
    const Dataset data = fixture::random_dataset(dims, 5, 0, Symmetry::none, rng);
    const GibbsSampler smp(fixture::make_config(dims, 4), data);
    ParameterState s = fixture::random_state(smp, rng);
    for (int rep = 0; rep < 200; ++rep) {
        smp.update_zeta(s, rng);
        EXPECT_GE(s.zeta.minCoeff(), 0.0);
        EXPECT_NEAR(s.zeta.sum(), 1.0, 1e-12);
    }
    const GibbsSampler one(fixture::make_config(dims, 1), data);
    ParameterState t = fixture::random_state(one, rng);
    one.update_zeta(t, rng);
    EXPECT_EQ(t.zeta[0], 1.0);
}

TEST(Zeta, InverseGammaReductionMatchesQuadrature) {
    const Dims dims{2, 2};
    RngStream rng(11);
    const Dataset data = fixture::random_dataset(dims, 3, 0, Symmetry::none, rng);
    const GibbsSampler smp(fixture::make_config(dims, 2), data);
    const ParameterState s = fixture::random_state(smp, rng);
    const GigParams c = smp.zeta_conditional(s, 0);
    EXPECT_EQ(c.a, 0.0);
    EXPECT_LT(c.p, 0.0);
    double m = 0, m2 = 0;
    const int N = 200000;
    for (int i = 0; i < N; ++i) {
        const double x = sample_gig(c, rng);
        m += x;
        m2 += x * x;
    }
    m /= N;
    const double se = std::sqrt((m2 / N - m * m) / N);
    // quadrature with a vanishing a keeps the same kernel
    const double q = oracle::gig_mean_quadrature(c.p, 1e-300, c.b);
    EXPECT_NEAR(q, c.b / 2.0 / (-c.p - 1.0), 1e-6 * q);
    EXPECT_LT(std::abs(m - q), 4 * se);
}

// ---- chain driver ----------------------------------------------------

TEST(RunChain, ReproducibleAndCounts) {
    const Dims dims{4, 3};
    RngStream rng(12);
    const Dataset data = fixture::random_dataset(dims, 30, 1, Symmetry::none, rng);
    SofterConfig cfg = fixture::make_config(dims, 2);
    cfg.sampler.iterations = 60;
    cfg.sampler.burn_in = 20;
    cfg.sampler.thin = 3;
    const GibbsSampler smp(cfg, data);
    const ChainSamples a = run_chain(smp, 0), b = run_chain(smp, 0), c = run_chain(smp, 1);
    EXPECT_EQ(a.draws(), 40u / 3u);
    EXPECT_EQ(a.B.size(), a.draws() * 12);
    EXPECT_EQ(a, b);
    EXPECT_NE(a.mu, c.mu);
    EXPECT_EQ(a.config_hash, config_hash(cfg));
}

TEST(RunChain, ResumeEqualsUninterrupted) {
    for (bool hard : {false, true}) {
        const Dims dims{3, 3};
        RngStream rng(13);
        const Dataset data = fixture::random_dataset(dims, 25, 0, Symmetry::none, rng);
        SofterConfig cfg = fixture::make_config(dims, 2, Symmetry::none, hard);
        cfg.sampler.iterations = 50;
        cfg.sampler.burn_in = 10;
        const GibbsSampler smp(cfg, data);
        const ChainSamples full = run_chain(smp, 1);
        RunOptions stop;
        stop.stop_after = 23;
        const ChainSamples part = run_chain(smp, 1, stop);
        EXPECT_EQ(part.completed, 23u);
        const ChainSamples reloaded = [&] {
            ChainSamples p = part;
            p.state = nlohmann::json::parse(part.state.dump());
            return p;
        }();
        RunOptions resume;
        resume.resume = &reloaded;
        const ChainSamples done = run_chain(smp, 1, resume);
        EXPECT_EQ(done, full);
    }
}

TEST(RunChain, CheckpointCallback) {
    const Dims dims{3, 2};
    RngStream rng(14);
    const Dataset data = fixture::random_dataset(dims, 15, 0, Symmetry::none, rng);
    SofterConfig cfg = fixture::make_config(dims, 1);
    cfg.sampler.iterations = 30;
    cfg.sampler.burn_in = 0;
    cfg.sampler.checkpoint_every = 10;
    const GibbsSampler smp(cfg, data);
    std::vector<std::size_t> at;
    RunOptions opt;
    opt.on_checkpoint = [&](const ChainSamples& c) { at.push_back(c.completed); };
    run_chain(smp, 0, opt);
    EXPECT_EQ(at, (std::vector<std::size_t>{10, 20}));
}

TEST(RunChain, NullSignalPosteriorCentredAtZero) {
    const Dims dims{4, 4};
    RngStream rng(15);
    Dataset data = fixture::random_dataset(dims, 120, 0, Symmetry::none, rng);
    for (auto& v : data.y) v = rng.normal(0.0, std::sqrt(0.5));
    SofterConfig cfg = fixture::make_config(dims, 3);
    cfg.sampler.iterations = 1500;
    cfg.sampler.burn_in = 500;
    const GibbsSampler smp(cfg, data);
    const ChainSamples ch = run_chain(smp, 0);
    const std::size_t P = 16, T = ch.draws();
    for (std::size_t e = 0; e < P; ++e) {
        double m = 0, m2 = 0;
        for (std::size_t t = 0; t < T; ++t) {
            const double v = ch.B[t * P + e];
            m += v;
            m2 += v * v;
        }
        m /= T;
        const double sd = std::sqrt(m2 / T - m * m);
        EXPECT_LT(std::abs(m), 4.0 * sd + 1e-12) << e;
    }
}

TEST(RunChain, PriorOnlyMatchesPriorMoments) {
    // n = 0 so the chain targets the prior; light tails (a_λ = 8) keep the
    // variance estimate stable
    const Dims dims{2, 2};
    SofterConfig cfg = fixture::make_config(dims, 1);
    cfg.hyper.a_lambda = 8.0;
    cfg.hyper.b_lambda = 4.0;
    cfg.hyper.a_sigma = 4.0;
    cfg.hyper.b_sigma = 4.0;
    cfg.hyper.a_tau_gamma = 8.0;
    cfg.hyper.b_tau_gamma = 4.0;
    cfg.sampler.iterations = 60000;
    cfg.sampler.burn_in = 1000;
    const Dataset empty = make_dataset(Eigen::VectorXd(0), {}, Eigen::MatrixXd(0, 0));
    const GibbsSampler smp(cfg, empty);
    const ChainSamples ch = run_chain(smp, 0);
    std::vector<double> sq, val;
    for (std::size_t t = 0; t < ch.draws(); ++t) {
        val.push_back(ch.B[t * 4]);
        sq.push_back(ch.B[t * 4] * ch.B[t * 4]);
    }
    const auto v = oracle::batch_mean(sq);
    const auto m = oracle::batch_mean(val);
    EXPECT_LT(std::abs(v.mean - prior_variance(cfg.hyper, 2)), 4 * v.se);
    EXPECT_LT(std::abs(m.mean), 4 * m.se);
}

TEST(RunChain, HardModeStaysHard) {
    const Dims dims{4, 3};
    RngStream rng(16);
    const Dataset data = fixture::random_dataset(dims, 40, 0, Symmetry::none, rng);
    SofterConfig cfg = fixture::make_config(dims, 2, Symmetry::none, true);
    const GibbsSampler smp(cfg, data);
    ParameterState s = smp.initial_state(rng);
    for (int it = 0; it < 30; ++it) {
        smp.sweep(s, rng);
        std::vector<std::vector<std::vector<double>>> f(2);
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t k = 0; k < 2; ++k)
                f[d].emplace_back(s.gamma[k][d].data(), s.gamma[k][d].data() + s.gamma[k][d].size());
        ASSERT_EQ(compose_coefficients(s), parafac_compose(f));
    }
}

TEST(RunChains, ThreadCountDoesNotMatter) {
    const Dims dims{3, 3};
    RngStream rng(17);
    const Dataset data = fixture::random_dataset(dims, 20, 0, Symmetry::none, rng);
    SofterConfig cfg = fixture::make_config(dims, 2);
    cfg.sampler.iterations = 40;
    cfg.sampler.burn_in = 10;
    cfg.sampler.chains = 3;
    const GibbsSampler smp(cfg, data);
    EXPECT_EQ(run_chains(smp, 1), run_chains(smp, 3));
}

TEST(Sampler, RejectsMismatchedDims) {
    RngStream rng(18);
    const Dataset data = fixture::random_dataset({3, 4}, 5, 0, Symmetry::none, rng);
    EXPECT_THROW(GibbsSampler(fixture::make_config({4, 3}, 1), data), ShapeError);
    const Dataset asym = fixture::random_dataset({3, 3}, 5, 0, Symmetry::none, rng);
    EXPECT_THROW(GibbsSampler(fixture::make_config({3, 3}, 1, Symmetry::symmetric), asym), DataError);
}
