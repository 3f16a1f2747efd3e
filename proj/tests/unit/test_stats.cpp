#include "fbmlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace fbmlab;

TEST(Moments, MeanVarianceStandardError) {
    const std::vector<double> x{1.0, 2.0, 4.0, 7.0};
    EXPECT_DOUBLE_EQ(stats::mean(x), 3.5);
    // sum of squared deviations 6.25 + 2.25 + 0.25 + 12.25 = 21, over n - 1
    EXPECT_DOUBLE_EQ(stats::variance(x), 7.0);
    EXPECT_DOUBLE_EQ(stats::standard_error(x), std::sqrt(7.0 / 4.0));
}

TEST(NormalCdf, KnownValues) {
    EXPECT_DOUBLE_EQ(stats::normal_cdf(0.0), 0.5);
    EXPECT_NEAR(stats::normal_cdf(1.959963984540054), 0.975, 1e-12);
    EXPECT_NEAR(stats::normal_cdf(-1.0), 0.15865525393145707, 1e-14);
}

TEST(WeightedFit, ExactLine) {
    const std::vector<double> x{0.0, 1.0, 2.0, 5.0};
    std::vector<double> y;
    for (double v : x) {
        y.push_back(-1.5 + 0.7 * v);
    }
    const auto fit = stats::weighted_fit(x, y);
    EXPECT_NEAR(fit.slope, 0.7, 1e-14);
    EXPECT_NEAR(fit.intercept, -1.5, 1e-14);
    EXPECT_NEAR(fit.r_squared, 1.0, 1e-14);
    EXPECT_NEAR(fit.slope_se, 0.0, 1e-7);
}

TEST(WeightedFit, HandComputedResiduals) {
    // x = 0, 1, 2; y = 0, 2, 1: slope 1/2, intercept 1/2, residuals -1/2, 1, -1/2
    const std::vector<double> x{0.0, 1.0, 2.0};
    const std::vector<double> y{0.0, 2.0, 1.0};
    const auto fit = stats::weighted_fit(x, y);
    EXPECT_NEAR(fit.slope, 0.5, 1e-15);
    EXPECT_NEAR(fit.intercept, 0.5, 1e-15);
    EXPECT_NEAR(fit.r_squared, 1.0 - 1.5 / 2.0, 1e-15);
    EXPECT_NEAR(fit.slope_se, std::sqrt(1.5 / 1.0 / 2.0), 1e-15);
}

TEST(WeightedFit, ZeroWeightDropsPoint) {
    const std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 5.0, 100.0};
    const std::vector<double> w{1.0, 2.0, 1.0, 0.0};
    const auto fit = stats::weighted_fit(x, y, w);
    EXPECT_NEAR(fit.slope, 2.0, 1e-14);
    EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
}

TEST(WeightedFit, RejectsDegenerateInput) {
    const std::vector<double> one{1.0};
    EXPECT_THROW(stats::weighted_fit(one, one), PreconditionError);
    const std::vector<double> same{2.0, 2.0, 2.0};
    const std::vector<double> y{1.0, 2.0, 3.0};
    EXPECT_THROW(stats::weighted_fit(same, y), PreconditionError);
    const std::vector<double> w{1.0, 1.0};
    EXPECT_THROW(stats::weighted_fit(y, y, w), PreconditionError);
}

TEST(Quantile, InterpolatesOrderStatistics) {
    const std::vector<double> x{5.0, 1.0, 3.0, 2.0, 4.0};
    EXPECT_DOUBLE_EQ(stats::quantile(x, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(stats::quantile(x, 1.0), 5.0);
    EXPECT_DOUBLE_EQ(stats::quantile(x, 0.5), 3.0);
    EXPECT_DOUBLE_EQ(stats::quantile(x, 0.9), 4.6);
    EXPECT_THROW(stats::quantile({}, 0.5), PreconditionError);
}

TEST(KolmogorovSmirnov, OneSampleHandComputed) {
    // single point at 0: F = 1/2 on both sides of the jump
    EXPECT_DOUBLE_EQ(stats::ks_statistic_normal({0.0}), 0.5);
    const std::vector<double> x{-1.0, 0.5};
    const double f0 = stats::normal_cdf(-1.0);
    const double f1 = stats::normal_cdf(0.5);
    const double expected = std::max({f0, 0.5 - f0, f1 - 0.5, 1.0 - f1});
    EXPECT_DOUBLE_EQ(stats::ks_statistic_normal(x), expected);
}

TEST(KolmogorovSmirnov, OneSampleAcceptsNormalDraws) {
    std::mt19937_64 engine(7);
    std::normal_distribution<double> normal;
    std::vector<double> x(5000);
    for (double& v : x) {
        v = normal(engine);
    }
    EXPECT_LT(stats::ks_statistic_normal(x), stats::ks_critical_one_sample(x.size(), 0.01));
    for (double& v : x) {
        v += 0.2;
    }
    EXPECT_GT(stats::ks_statistic_normal(x), stats::ks_critical_one_sample(x.size(), 0.01));
}

TEST(KolmogorovSmirnov, TwoSampleHandComputed) {
    EXPECT_DOUBLE_EQ(stats::ks_statistic({1.0, 2.0, 3.0}, {1.0, 2.0, 3.0}), 0.0);
    EXPECT_DOUBLE_EQ(stats::ks_statistic({1.0, 2.0}, {3.0, 4.0}), 1.0);
    // F_a jumps at 1, 3; F_b at 2, 4: sup gap 1/2
    EXPECT_DOUBLE_EQ(stats::ks_statistic({1.0, 3.0}, {2.0, 4.0}), 0.5);
    // ties are consumed together
    EXPECT_DOUBLE_EQ(stats::ks_statistic({1.0, 1.0, 2.0, 2.0}, {1.0, 2.0}), 0.0);
}

TEST(KolmogorovSmirnov, CriticalValues) {
    EXPECT_NEAR(stats::ks_coefficient(0.05), 1.3581015157406195, 1e-12);
    EXPECT_NEAR(stats::ks_critical_two_sample(100, 100, 0.05), 1.3581015157406195 * std::sqrt(0.02), 1e-12);
    EXPECT_NEAR(stats::ks_critical_one_sample(400, 0.05), 1.3581015157406195 / 20.0, 1e-12);
}

TEST(Wasserstein, SortedCoupling) {
    EXPECT_DOUBLE_EQ(stats::wasserstein1({0.0, 1.0}, {1.0, 0.0}), 0.0);
    EXPECT_DOUBLE_EQ(stats::wasserstein1({0.0, 1.0, 2.0}, {0.5, 1.5, 2.5}), 0.5);
    EXPECT_THROW(stats::wasserstein1({0.0}, {0.0, 1.0}), PreconditionError);
}

TEST(Bootstrap, MatchesAnalyticStandardError) {
    std::mt19937_64 data(3);
    std::normal_distribution<double> normal(1.0, 2.0);
    std::vector<double> x(400);
    for (double& v : x) {
        v = normal(data);
    }
    std::mt19937_64 engine(4);
    const double se = stats::bootstrap_mean_se(x, 2000, engine);
    EXPECT_NEAR(se, stats::standard_error(x), 0.1 * stats::standard_error(x));
}
