#pragma once

#include "fbmlab/errors.hpp"
#include "fbmlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

namespace fbmlab::stats {

inline double mean(std::span<const double> x) {
    require(!x.empty(), "mean: empty sample");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
    require(x.size() >= 2, "variance: need at least two samples");
    const double m = mean(x);
    double acc = 0.0;
    for (double v : x) {
        acc += (v - m) * (v - m);
    }
    return acc / static_cast<double>(x.size() - 1);
}

inline double standard_error(std::span<const double> x) {
    return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Asymptotic Kolmogorov-Smirnov coefficient c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_coefficient(double alpha) { return std::sqrt(-0.5 * std::log(0.5 * alpha)); }

/// One-sample KS statistic against the standard normal.
inline double ks_statistic_normal(std::vector<double> x) {
    require(!x.empty(), "ks_statistic_normal: empty sample");
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = normal_cdf(x[i]);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

inline double ks_critical_one_sample(std::size_t n, double alpha) {
    return ks_coefficient(alpha) / std::sqrt(static_cast<double>(n));
}

/// Two-sample KS statistic sup |F_a - F_b|.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == v) ++i;
        while (j < b.size() && b[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

inline double ks_critical_two_sample(std::size_t n, std::size_t m, double alpha) {
    const double nn = static_cast<double>(n);
    const double mm = static_cast<double>(m);
    return ks_coefficient(alpha) * std::sqrt((nn + mm) / (nn * mm));
}

/// 1-Wasserstein distance between two empirical laws of equal size.
inline double wasserstein1(std::vector<double> a, std::vector<double> b) {
    require(a.size() == b.size() && !a.empty(), "wasserstein1: samples must have equal nonzero size");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return acc / static_cast<double>(a.size());
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_se = 0.0;
};

/// Weighted least squares y ~ intercept + slope x. Empty weights mean OLS.
inline LinearFit weighted_fit(std::span<const double> x, std::span<const double> y, std::span<const double> w = {}) {
    require(x.size() == y.size() && x.size() >= 2, "weighted_fit: need >= 2 paired points");
    require(w.empty() || w.size() == x.size(), "weighted_fit: weight count mismatch");
    const std::size_t n = x.size();
    auto weight = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += weight(i);
        sx += weight(i) * x[i];
        sy += weight(i) * y[i];
    }
    const double mx = sx / sw;
    const double my = sy / sw;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += weight(i) * (x[i] - mx) * (x[i] - mx);
        sxy += weight(i) * (x[i] - mx) * (y[i] - my);
        syy += weight(i) * (y[i] - my) * (y[i] - my);
    }
    require(sxx > 0.0, "weighted_fit: abscissae are all equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - fit.intercept - fit.slope * x[i];
        rss += weight(i) * r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    if (n > 2) {
        fit.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
    return fit;
}

/// Bootstrap standard error of the mean of a per-path statistic.
inline double bootstrap_mean_se(std::span<const double> samples, std::size_t resamples, std::mt19937_64& engine) {
    require(!samples.empty() && resamples >= 2, "bootstrap_mean_se: bad arguments");
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double acc = 0.0;
        for (std::size_t k = 0; k < samples.size(); ++k) {
            acc += samples[pick(engine)];
        }
        m = acc / static_cast<double>(samples.size());
    }
    return std::sqrt(variance(means));
}

/// Empirical q-quantile by linear interpolation of order statistics.
inline double quantile(std::vector<double> x, double q) {
    require(!x.empty(), "quantile: empty sample");
    std::sort(x.begin(), x.end());
    const double pos = q * static_cast<double>(x.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

} // namespace fbmlab::stats
