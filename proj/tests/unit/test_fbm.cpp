#include "fbmlab/fbm.hpp"
#include "fbmlab/parallel.hpp"
#include "fbmlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace fbmlab;

TEST(FgnCovariance, UnitVarianceAtLagZero) { EXPECT_DOUBLE_EQ(fgn_covariance(0.3, 0, 1.0), 1.0); }

TEST(FgnCovariance, BrownianIncrementsAreUncorrelated) { EXPECT_NEAR(fgn_covariance(0.5, 3, 1.0), 0.0, 1e-15); }

TEST(FgnCovariance, LagOneAtQuarterHurst) {
    EXPECT_NEAR(fgn_covariance(0.25, 1, 1.0), 0.5 * (std::sqrt(2.0) - 2.0), 1e-12);
    EXPECT_NEAR(fgn_covariance(0.25, 1, 1.0), -0.2928932, 1e-7);
}

TEST(FgnCovariance, SymmetricAndScalesWithDt) {
    EXPECT_DOUBLE_EQ(fgn_covariance(0.3, 4, 0.1), fgn_covariance(0.3, -4, 0.1));
    EXPECT_NEAR(fgn_covariance(0.3, 2, 0.01), std::pow(0.01, 0.6) * fgn_covariance(0.3, 2, 1.0), 1e-15);
}

TEST(FgnCovariance, DomainErrors) {
    EXPECT_THROW(fgn_covariance(0.3, 1, 0.0), std::domain_error);
    EXPECT_THROW(fgn_covariance(0.0, 1, 1.0), std::domain_error);
    EXPECT_THROW(fgn_covariance(1.2, 1, 1.0), std::domain_error);
}

// Oracle: Monte Carlo covariance of adjacent sampled increments, 1000 paths x
// 1023 pairs (> 10^6 products), SE from per-path averages.
TEST(FgnCovariance, MatchesMonteCarloLagOne) {
    FbmConfig cfg{0.25, 1024.0, 1024, 1};
    FbmSampler sampler(cfg);
    std::vector<double> per_path(1000);
    parallel_for(per_path.size(), [&](std::size_t p) {
        const GridPath b = sampler.sample({11, p});
        double acc = 0.0;
        for (std::size_t i = 1; i + 1 <= cfg.n_steps - 1; ++i) {
            const double x = b(i, 0) - b(i - 1, 0);
            const double y = b(i + 1, 0) - b(i, 0);
            acc += x * y;
        }
        per_path[p] = acc / static_cast<double>(cfg.n_steps - 1);
    });
    const double est = stats::mean(per_path);
    const double se = stats::standard_error(per_path);
    EXPECT_LE(std::abs(est - fgn_covariance(0.25, 1, 1.0)), 3.0 * se) << est << " se " << se;
}

TEST(SampleFbm, DeterministicGivenLineage) {
    FbmConfig cfg{0.3, 1.0, 512, 2};
    const GridPath a = sample_fbm(cfg, {7, 3});
    const GridPath b = sample_fbm(cfg, {7, 3});
    EXPECT_EQ(a.values, b.values);
    const GridPath c = sample_fbm(cfg, {7, 4});
    EXPECT_NE(a.values, c.values);
    EXPECT_EQ(a.values[0], 0.0);
    EXPECT_EQ(a.kind, PathKind::B);
}

TEST(SampleFbm, CoordinatesUseIndependentStreams) {
    FbmConfig cfg{0.3, 1.0, 256, 2};
    const GridPath a = sample_fbm(cfg, {5, 0});
    bool differ = false;
    for (std::size_t i = 1; i < a.size(); ++i) {
        differ = differ || a(i, 0) != a(i, 1);
    }
    EXPECT_TRUE(differ);
}

TEST(SampleFbm, BrownianIncrementsLookStandardNormal) {
    FbmConfig cfg{0.5, 1.0, 4096, 1};
    const GridPath b = sample_fbm(cfg, {1, 0});
    std::vector<double> z;
    const double sdt = std::sqrt(cfg.dt());
    for (std::size_t i = 1; i < b.size(); ++i) {
        z.push_back((b(i, 0) - b(i - 1, 0)) / sdt);
    }
    EXPECT_LT(stats::ks_statistic_normal(z), stats::ks_critical_one_sample(z.size(), 0.01));
}

// Oracle: analytic fBm covariance at 10 grid pairs.
TEST(SampleFbm, EmpiricalCovarianceMatchesAnalytic) {
    FbmConfig cfg{0.3, 1.0, 256, 1};
    FbmSampler sampler(cfg);
    const std::size_t paths = 20000;
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{
        {1, 1}, {1, 2}, {3, 7}, {16, 16}, {16, 64}, {50, 200}, {128, 129}, {100, 256}, {200, 250}, {256, 256}};
    std::vector<std::vector<double>> products(pairs.size(), std::vector<double>(paths));
    parallel_for(paths, [&](std::size_t p) {
        const GridPath b = sampler.sample({2024, p});
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            products[k][p] = b(pairs[k].first, 0) * b(pairs[k].second, 0);
        }
    });
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const double s = cfg.time(pairs[k].first);
        const double t = cfg.time(pairs[k].second);
        const double est = stats::mean(products[k]);
        const double se = stats::standard_error(products[k]);
        EXPECT_LE(std::abs(est - fbm_covariance(0.3, s, t)), 3.0 * se) << "pair " << k;
    }
}

TEST(SampleFbm, CholeskyFallbackAgreesInLaw) {
    FbmConfig cfg{0.3, 1.0, 128, 1};
    FbmSampler forced(cfg, true);
    EXPECT_TRUE(forced.diagnostics().embedding_fallback);
    EXPECT_FALSE(FbmSampler(cfg).diagnostics().embedding_fallback);
    const std::size_t paths = 20000;
    std::vector<double> end_sq(paths), mid_prod(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        const GridPath b = forced.sample({3, p});
        end_sq[p] = b(128, 0) * b(128, 0);
        mid_prod[p] = b(32, 0) * b(96, 0);
    }
    EXPECT_LE(std::abs(stats::mean(end_sq) - 1.0), 3.0 * stats::standard_error(end_sq));
    EXPECT_LE(std::abs(stats::mean(mid_prod) - fbm_covariance(0.3, 0.25, 0.75)), 3.0 * stats::standard_error(mid_prod));
}

TEST(FbmConfig, RejectsOutOfRange) {
    EXPECT_THROW((FbmConfig{0.6, 1.0, 16, 1}.validate()), ConfigError);
    EXPECT_THROW((FbmConfig{0.3, 1.0, 1, 1}.validate()), ConfigError);
    EXPECT_THROW((FbmConfig{0.0, 1.0, 16, 1}.validate()), ConfigError);
}

TEST(Volterra, BrownianKernelIsCumulativeSum) {
    VolterraKernel k(FbmConfig{0.5, 1.0, 64, 1});
    for (std::size_t i = 1; i <= 64; ++i) {
        for (std::size_t j = 1; j <= 64; ++j) {
            EXPECT_EQ(k.entry(i, j), j <= i ? 1.0 : 0.0);
        }
    }
}

TEST(Volterra, ReproducesCovariance) {
    FbmConfig cfg{0.3, 2.0, 200, 1};
    VolterraKernel k(cfg);
    const Eigen::MatrixXd m = k.matrix();
    const Eigen::MatrixXd cov = cfg.dt() * m * m.transpose();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) {
        for (Eigen::Index j = 0; j < cov.cols(); ++j) {
            const double truth = fbm_covariance(0.3, cfg.time(i + 1), cfg.time(j + 1));
            worst = std::max(worst, std::abs(cov(i, j) - truth) / std::abs(truth));
        }
    }
    EXPECT_LT(worst, 1e-10);
}

// Hand Cholesky of [[1, c], [c, 2^{2H}]] with c = 2^{2H-1}, in grid units.
TEST(Volterra, TwoStepHandCholesky) {
    const double h = 0.3;
    FbmConfig cfg{h, 1.0, 2, 1};
    VolterraKernel k(cfg);
    const double scale = std::pow(0.5, h - 0.5);
    const double c = std::pow(2.0, 2 * h - 1);
    EXPECT_NEAR(k.entry(1, 1), scale, 1e-14);
    EXPECT_NEAR(k.entry(2, 1), scale * c, 1e-14);
    EXPECT_NEAR(k.entry(2, 2), scale * std::sqrt(std::pow(2.0, 2 * h) - c * c), 1e-14);
    EXPECT_EQ(k.entry(1, 2), 0.0);
    // physical check: K K^T dt equals the fBm covariance on {0.5, 1}
    EXPECT_NEAR(cfg.dt() * k.entry(1, 1) * k.entry(1, 1), std::pow(0.5, 2 * h), 1e-14);
}

TEST(Operators, RoundTripIsIdentity) {
    for (std::size_t n : {64u, 256u}) {
        FbmConfig cfg{0.1, 1.0, n, 2};
        VolterraKernel k(cfg);
        for (std::uint64_t p = 0; p < 5; ++p) {
            const GridPath w = sample_brownian(cfg, {9, p});
            const GridPath back = apply_a(apply_abar(w, k), k);
            double dev = 0.0, scale = 0.0;
            for (std::size_t i = 0; i < w.values.size(); ++i) {
                dev = std::max(dev, std::abs(back.values[i] - w.values[i]));
                scale = std::max(scale, std::abs(w.values[i]));
            }
            EXPECT_LE(dev / scale, 1e-8);
        }
    }
}

TEST(Operators, BrownianCaseIsIdentityExactly) {
    FbmConfig cfg{0.5, 1.0, 128, 1};
    VolterraKernel k(cfg);
    const GridPath w = sample_brownian(cfg, {1, 1});
    EXPECT_EQ(apply_abar(w, k).values, w.values);
    EXPECT_EQ(apply_a(w, k).values, w.values);
}

TEST(Operators, GridMismatchIsPrecondition) {
    VolterraKernel k(FbmConfig{0.3, 1.0, 64, 1});
    const GridPath w = sample_brownian(FbmConfig{0.3, 1.0, 32, 1}, {1, 1});
    EXPECT_THROW(apply_abar(w, k), PreconditionError);
    EXPECT_THROW(apply_a(w, k), PreconditionError);
}

// Law of A(B): increments iid N(0, dt).
TEST(Operators, RecoveredBrownianIncrementsHaveVarianceDt) {
    FbmConfig cfg{0.3, 1.0, 128, 1};
    VolterraKernel k(cfg);
    FbmSampler sampler(cfg);
    const std::size_t paths = 5000;
    std::vector<double> first(paths), last(paths), cross(paths);
    for (std::size_t p = 0; p < paths; ++p) {
        const GridPath w = apply_a(sampler.sample({77, p}), k);
        first[p] = (w(1, 0) - w(0, 0)) * (w(1, 0) - w(0, 0));
        last[p] = (w(128, 0) - w(127, 0)) * (w(128, 0) - w(127, 0));
        cross[p] = (w(1, 0) - w(0, 0)) * (w(2, 0) - w(1, 0));
    }
    EXPECT_LE(std::abs(stats::mean(first) - cfg.dt()), 3.0 * stats::standard_error(first));
    EXPECT_LE(std::abs(stats::mean(last) - cfg.dt()), 3.0 * stats::standard_error(last));
    EXPECT_LE(std::abs(stats::mean(cross)), 3.0 * stats::standard_error(cross));
}

TEST(ConditionalLaw, BrownianVarianceIsElapsedTime) {
    VolterraKernel k(FbmConfig{0.5, 1.0, 256, 1});
    for (std::size_t u : {0u, 10u, 100u}) {
        for (std::size_t r : {101u, 200u, 256u}) {
            if (u < r) {
                EXPECT_NEAR(conditional_variance(k, u, r), (r - u) / 256.0, 1e-12);
            }
        }
    }
}

TEST(ConditionalLaw, MeanVanishesWithEmptyHistory) {
    FbmConfig cfg{0.3, 1.0, 64, 2};
    VolterraKernel k(cfg);
    const GridPath b = sample_fbm(cfg, {1, 2});
    for (std::size_t r = 1; r <= 64; r += 9) {
        const auto law = conditional_law(b, 0, r, k);
        EXPECT_EQ(law.mean[0], 0.0);
        EXPECT_EQ(law.mean[1], 0.0);
        EXPECT_NEAR(law.variance, std::pow(cfg.time(r), 0.6), 1e-12);
    }
}

TEST(ConditionalLaw, MeanAtHistoryEndReproducesPath) {
    FbmConfig cfg{0.3, 1.0, 64, 1};
    VolterraKernel k(cfg);
    const GridPath b = sample_fbm(cfg, {1, 3});
    ConditionalLaw law(b, k);
    for (std::size_t u = 1; u < 64; u += 7) {
        // conditioning on B up to u, the "prediction" of B_u is B_u itself
        EXPECT_NEAR(law.mean(u, u, 0), b(u, 0), 1e-12);
    }
}

TEST(ConditionalLaw, RequiresUBeforeR) {
    FbmConfig cfg{0.3, 1.0, 64, 1};
    VolterraKernel k(cfg);
    const GridPath b = sample_fbm(cfg, {1, 3});
    EXPECT_THROW(conditional_law(b, 10, 10, k), PreconditionError);
    EXPECT_THROW(conditional_variance(k, 11, 10), PreconditionError);
}

TEST(ConditionalLaw, LocalNondeterminismLowerBound) {
    FbmConfig cfg{0.3, 1.0, 256, 1};
    VolterraKernel k(cfg);
    double worst = 1e300;
    for (std::size_t u = 0; u < 256; u += 5) {
        for (std::size_t r = u + 1; r <= 256; r += 3) {
            const double lag = cfg.time(r) - cfg.time(u);
            worst = std::min(worst, conditional_variance(k, u, r) / std::pow(lag, 0.6));
        }
    }
    EXPECT_GT(worst, 0.0);
}

TEST(ConditionalLaw, VarianceScalingSlopeIsTwiceHurst) {
    for (double h : {0.25, 0.4}) {
        FbmConfig cfg{h, 1.0, 256, 1};
        VolterraKernel k(cfg);
        std::vector<double> lx, ly;
        const std::size_t u = 64;
        for (std::size_t lag = 1; u + lag <= 256; lag *= 2) {
            lx.push_back(std::log(cfg.dt() * lag));
            ly.push_back(std::log(conditional_variance(k, u, u + lag)));
        }
        EXPECT_NEAR(stats::weighted_fit(lx, ly).slope, 2 * h, 0.05) << "H=" << h;
    }
}
