#pragma once

// Monte Carlo layer: L^m increment moments over dyadic lags with bootstrap
// errors, exponent regression, and the regularization, tightness, stability
// and flagship experiments. Paths are generated per index and reduced to
// per-path summaries in index order, so results do not depend on the worker
// count.

#include "fbmlab/besov.hpp"
#include "fbmlab/drift.hpp"
#include "fbmlab/errors.hpp"
#include "fbmlab/fbm.hpp"
#include "fbmlab/parallel.hpp"
#include "fbmlab/rng.hpp"
#include "fbmlab/sewing.hpp"
#include "fbmlab/solve.hpp"
#include "fbmlab/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace fbmlab {

enum class Quantity { B, K, XminusB, Germ, Averaged };

inline const char* to_string(Quantity q) {
    switch (q) {
    case Quantity::B: return "B";
    case Quantity::K: return "K";
    case Quantity::XminusB: return "X-B";
    case Quantity::Germ: return "germ";
    case Quantity::Averaged: return "averaged";
    }
    return "?";
}

inline Quantity quantity_from_string(const std::string& s) {
    if (s == "B") return Quantity::B;
    if (s == "K") return Quantity::K;
    if (s == "X-B" || s == "XminusB") return Quantity::XminusB;
    if (s == "germ") return Quantity::Germ;
    if (s == "averaged") return Quantity::Averaged;
    throw ConfigError("unknown quantity '" + s + "'");
}

/// Dyadic lags T 2^{-k} for k = level_lo..level_hi.
struct LagWindow {
    int level_lo = 3;
    int level_hi = 10;

    void validate(std::size_t n_steps) const {
        if (level_lo < 0 || level_hi < level_lo) {
            throw ConfigError("lag window: need 0 <= level_lo <= level_hi");
        }
        if (level_hi >= 63 || n_steps % (std::size_t{1} << level_hi) != 0) {
            throw ConfigError("lag window: n_steps must be divisible by 2^level_hi");
        }
    }

    friend bool operator==(const LagWindow&, const LagWindow&) = default;
};

/// Drops the finest lags below cut * eps^{1/(2H)}, where the noise has not yet
/// spread across the mollified spike and the drift still looks smooth.
inline LagWindow singular_window(LagWindow window, double horizon, double hurst, double eps, double cut = 10.0) {
    const double floor = cut * std::pow(eps, 1.0 / (2.0 * hurst));
    while (window.level_hi >= window.level_lo && horizon * std::exp2(-window.level_hi) < floor) {
        --window.level_hi;
    }
    if (window.level_hi < window.level_lo + 3) {
        throw ConfigError("lag window: fewer than 4 lags above the smoothing scale; lower eps or widen the window");
    }
    return window;
}

struct Lag {
    int level = 0;
    double length = 0.0;      ///< t - s
    std::size_t stride = 0;   ///< grid steps per lag
};

inline std::vector<Lag> make_lags(const LagWindow& window, std::size_t n_steps, double horizon) {
    window.validate(n_steps);
    std::vector<Lag> lags;
    for (int k = window.level_lo; k <= window.level_hi; ++k) {
        lags.push_back(Lag{k, horizon * std::exp2(-k), n_steps >> k});
    }
    return lags;
}

struct MomentTable {
    Quantity quantity = Quantity::B;
    double m = 2.0;
    std::size_t n_paths = 0;
    std::size_t resamples = 0;
    std::vector<Lag> lags;
    std::vector<double> estimates;   ///< (E|.|^m)^{1/m}
    std::vector<double> std_errors;  ///< bootstrap over paths
};

struct MomentOptions {
    std::size_t min_paths = 1000;
    std::size_t resamples = 200;
    std::uint64_t bootstrap_seed = 0;
};

/// Per-lag mean of |value_t - value_s|^m over all pairs (j lag, (j+1) lag),
/// or over the single pair (0, lag) when from_origin. Euclidean norm.
template <class Value>
std::vector<double> increment_power_means(std::size_t dimension, Value&& value, const std::vector<Lag>& lags,
                                          double m, std::size_t n_steps, bool from_origin = false) {
    std::vector<double> out;
    out.reserve(lags.size());
    for (const Lag& lag : lags) {
        const std::size_t pairs = from_origin ? 1 : n_steps / lag.stride;
        double acc = 0.0;
        for (std::size_t j = 0; j < pairs; ++j) {
            const std::size_t s = j * lag.stride;
            const std::size_t t = s + lag.stride;
            double r2 = 0.0;
            for (std::size_t c = 0; c < dimension; ++c) {
                const double v = value(t, c) - value(s, c);
                r2 += v * v;
            }
            acc += m == 2.0 ? r2 : std::pow(r2, 0.5 * m);
        }
        out.push_back(acc / static_cast<double>(pairs));
    }
    return out;
}

/// Bootstrap table from per-path (rows) per-lag (columns) power means.
inline MomentTable moment_table(Quantity quantity, double m, std::vector<Lag> lags,
                                const std::vector<std::vector<double>>& samples, const MomentOptions& options) {
    require(!samples.empty(), "estimate_moments: empty ensemble");
    require(samples.size() >= options.min_paths,
            "estimate_moments: needs at least " + std::to_string(options.min_paths) + " paths, got " +
                std::to_string(samples.size()));
    require(options.resamples >= 200, "estimate_moments: needs at least 200 bootstrap resamples");
    require(m >= 2.0, "estimate_moments: m must be >= 2");
    MomentTable table;
    table.quantity = quantity;
    table.m = m;
    table.n_paths = samples.size();
    table.resamples = options.resamples;
    table.lags = std::move(lags);
    const std::size_t n_lags = table.lags.size();
    const std::size_t n = samples.size();
    std::vector<double> mean(n_lags, 0.0);
    for (const auto& row : samples) {
        require(row.size() == n_lags, "estimate_moments: ragged samples");
        for (std::size_t l = 0; l < n_lags; ++l) {
            mean[l] += row[l];
        }
    }
    for (std::size_t l = 0; l < n_lags; ++l) {
        table.estimates.push_back(std::pow(mean[l] / static_cast<double>(n), 1.0 / m));
    }
    auto engine = make_stream({options.bootstrap_seed, 0}, 0, StreamPurpose::Bootstrap);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::vector<double>> boot(n_lags, std::vector<double>(options.resamples));
    std::vector<double> acc(n_lags);
    for (std::size_t r = 0; r < options.resamples; ++r) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& row = samples[pick(engine)];
            for (std::size_t l = 0; l < n_lags; ++l) {
                acc[l] += row[l];
            }
        }
        for (std::size_t l = 0; l < n_lags; ++l) {
            boot[l][r] = std::pow(acc[l] / static_cast<double>(n), 1.0 / m);
        }
    }
    for (std::size_t l = 0; l < n_lags; ++l) {
        table.std_errors.push_back(std::sqrt(stats::variance(boot[l])));
    }
    return table;
}

/// Per-path moment samples of one solution. Germ needs the field h.
inline std::vector<double> solution_moments(const SolutionPath& sol, Quantity quantity, double m,
                                            const std::vector<Lag>& lags, const SmoothedDrift* h = nullptr,
                                            std::size_t germ_substeps = 1) {
    require(sol.completed(), "estimate_moments: solution left the lattice box");
    const std::size_t d = sol.X.dimension;
    const std::size_t n = sol.X.steps();
    switch (quantity) {
    case Quantity::B:
        return increment_power_means(d, [&](std::size_t i, std::size_t c) { return sol.X(i, c) - sol.K(i, c); }, lags,
                                     m, n);
    case Quantity::K:
        return increment_power_means(d, [&](std::size_t i, std::size_t c) { return sol.K(i, c); }, lags, m, n);
    case Quantity::XminusB:
        // X - B = x0 + K
        return increment_power_means(
            d, [&](std::size_t i, std::size_t c) { return sol.X(i, c) - (sol.X(i, c) - sol.K(i, c)); }, lags, m, n);
    case Quantity::Germ: {
        require(h != nullptr, "estimate_moments: the germ quantity needs a drift field");
        const SewingPath path = SewingPath::from(sol);
        std::vector<double> out;
        for (const Lag& lag : lags) {
            double acc = 0.0;
            const std::size_t pairs = n / lag.stride;
            for (std::size_t j = 0; j < pairs; ++j) {
                const auto a = germ_eval(*h, path, j * lag.stride, (j + 1) * lag.stride, germ_substeps);
                double r2 = 0.0;
                for (double v : a) {
                    r2 += v * v;
                }
                acc += std::pow(r2, 0.5 * m);
            }
            out.push_back(acc / static_cast<double>(pairs));
        }
        return out;
    }
    case Quantity::Averaged:
        break;
    }
    throw ConfigError("estimate_moments: quantity '" + std::string(to_string(quantity)) +
                      "' is not a solution increment");
}

/// L^m increment norms over the ensemble, pooled over all dyadic pairs of each lag.
inline MomentTable estimate_moments(const std::vector<SolutionPath>& ensemble, Quantity quantity, double m,
                                    const LagWindow& window, const MomentOptions& options = {},
                                    const SmoothedDrift* h = nullptr, std::size_t germ_substeps = 1) {
    require(!ensemble.empty(), "estimate_moments: empty ensemble");
    const auto lags = make_lags(window, ensemble.front().X.steps(), ensemble.front().X.times.back());
    std::vector<std::vector<double>> samples(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t p) {
        samples[p] = solution_moments(ensemble[p], quantity, m, lags, h, germ_substeps);
    });
    return moment_table(quantity, m, lags, samples, options);
}

/// L^m increment norms of noise paths (quantity B).
inline MomentTable estimate_moments(const std::vector<GridPath>& noise, double m, const LagWindow& window,
                                    const MomentOptions& options = {}) {
    require(!noise.empty(), "estimate_moments: empty ensemble");
    const auto lags = make_lags(window, noise.front().steps(), noise.front().times.back());
    std::vector<std::vector<double>> samples(noise.size());
    parallel_for(noise.size(), [&](std::size_t p) {
        const GridPath& b = noise[p];
        samples[p] = increment_power_means(b.dimension, [&](std::size_t i, std::size_t c) { return b(i, c); }, lags, m,
                                           b.steps());
    });
    return moment_table(Quantity::B, m, lags, samples, options);
}

struct ExponentFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    std::size_t points = 0;
    double octaves = 0.0;
    bool flagged = false;  ///< some nonpositive estimates were dropped
};

/// Weighted least squares of log estimate on log lag; the weight of a lag is
/// (estimate / std_error)^2, the inverse delta-method variance of the log.
inline ExponentFit fit_exponent(const MomentTable& table, std::size_t min_points = 4, double min_octaves = 3.0) {
    require(table.estimates.size() == table.lags.size() && table.std_errors.size() == table.lags.size(),
            "fit_exponent: malformed table");
    std::vector<double> x, y, w;
    ExponentFit fit;
    bool weighted = true;
    for (std::size_t l = 0; l < table.lags.size(); ++l) {
        if (!(table.estimates[l] > 0.0)) {
            fit.flagged = true;
            continue;
        }
        x.push_back(std::log(table.lags[l].length));
        y.push_back(std::log(table.estimates[l]));
        const double rel = table.std_errors[l] / table.estimates[l];
        weighted = weighted && rel > 0.0;
        w.push_back(rel > 0.0 ? 1.0 / (rel * rel) : 0.0);
    }
    fit.points = x.size();
    if (fit.points >= 2) {
        fit.octaves = (*std::max_element(x.begin(), x.end()) - *std::min_element(x.begin(), x.end())) / std::log(2.0);
    }
    require(fit.points >= min_points && fit.octaves >= min_octaves - 1e-9,
            "fit_exponent: needs >= " + std::to_string(min_points) + " positive lags spanning >= " +
                std::to_string(min_octaves) + " octaves");
    const auto lf = weighted ? stats::weighted_fit(x, y, w) : stats::weighted_fit(x, y);
    fit.slope = lf.slope;
    fit.intercept = lf.intercept;
    fit.r_squared = lf.r_squared;
    const boost::math::students_t dist(static_cast<double>(fit.points - 2));
    const double half = boost::math::quantile(boost::math::complement(dist, 0.025)) * lf.slope_se;
    fit.ci_lo = fit.slope - half;
    fit.ci_hi = fit.slope + half;
    return fit;
}

/// Noise paths generated on demand from one sampler.
class NoiseSource {
public:
    NoiseSource(const FbmConfig& config, std::uint64_t master_seed)
        : sampler_(std::make_shared<const FbmSampler>(config)), seed_(master_seed) {}

    GridPath operator()(std::size_t path_index) const { return sampler_->sample({seed_, path_index}); }
    const FbmConfig& config() const { return sampler_->config(); }
    std::uint64_t master_seed() const { return seed_; }

private:
    std::shared_ptr<const FbmSampler> sampler_;
    std::uint64_t seed_;
};

namespace detail {

/// C_i = int_0^{t_i} f(y_r) dr per component by the composite trapezoid with
/// `substeps` sub-cells per grid cell and y linear within cells.
template <PointField Field>
std::vector<double> cumulative_integral(const Field& f, const GridPath& y, std::size_t substeps) {
    const std::size_t d = y.dimension;
    const std::size_t n = y.steps();
    std::vector<double> out((n + 1) * d, 0.0), x(d), val(d), left(d);
    const double inv_s = 1.0 / static_cast<double>(substeps);
    auto eval = [&](std::size_t i, double theta, std::vector<double>& dst) {
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = theta == 0.0 ? y(i, c) : y(i, c) + theta * (y(i + 1, c) - y(i, c));
        }
        if (!f.evaluate(x.data(), dst.data())) {
            throw BoxExitError("integrand argument left the lattice box");
        }
    };
    eval(0, 0.0, left);
    for (std::size_t i = 0; i < n; ++i) {
        const double h = (y.times[i + 1] - y.times[i]) * inv_s;
        for (std::size_t c = 0; c < d; ++c) {
            out[(i + 1) * d + c] = out[i * d + c] + 0.5 * h * left[c];
        }
        for (std::size_t q = 1; q < substeps; ++q) {
            eval(i, static_cast<double>(q) * inv_s, val);
            for (std::size_t c = 0; c < d; ++c) {
                out[(i + 1) * d + c] += h * val[c];
            }
        }
        eval(i + 1 == n ? i : i + 1, i + 1 == n ? 1.0 : 0.0, left);
        for (std::size_t c = 0; c < d; ++c) {
            out[(i + 1) * d + c] += 0.5 * h * left[c];
        }
    }
    return out;
}

inline double sup_l1_gap(const std::vector<double>& a, const std::vector<double>& b, std::size_t d) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); i += d) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            acc += std::abs(a[i + c] - b[i + c]);
        }
        worst = std::max(worst, acc);
    }
    return worst;
}

} // namespace detail

struct RegularizationReport {
    double gamma = 0.0;
    double target = 0.0;  ///< 1 + H gamma
    MomentTable table;
    ExponentFit fit;
};

/// Admissibility of the regularity index in the averaging estimate.
inline void check_regularization_gamma(double gamma, double hurst) {
    if (gamma > -1.0 / (2.0 * hurst) && gamma < 0.0) {
        return;
    }
    std::ostringstream msg;
    msg << "regularization gate -1/(2H) < gamma < 0 violated: gamma=" << gamma << " with H=" << hurst
        << " requires gamma in (" << -1.0 / (2.0 * hurst) << ", 0)";
    throw ConfigError(msg.str());
}

/// ||int_0^t f(B_r) dr||_{L^m} over dyadic t, fitted against t; the target
/// exponent is 1 + H gamma. The bridge quadrature needs `f.evaluate_heat`;
/// `substeps` applies to the segment quadrature.
template <PointField Field>
RegularizationReport regularization_experiment(const Field& f, double gamma, double hurst, double m,
                                               const NoiseSource& noise, std::size_t n_paths, const LagWindow& window,
                                               DriftQuadrature quadrature = DriftQuadrature::Bridge,
                                               std::size_t substeps = 1, const MomentOptions& options = {}) {
    check_regularization_gamma(gamma, hurst);
    require(noise.config().hurst == hurst, "regularization_experiment: noise has a different Hurst index");
    constexpr bool heat = requires(const Field& g, const double* x, double* out) { g.evaluate_heat(0.0, x, out); };
    if (quadrature == DriftQuadrature::Bridge && !heat) {
        throw ConfigError("regularization_experiment: the bridge quadrature needs a heat-smoothable integrand");
    }
    const auto lags = make_lags(window, noise.config().n_steps, noise.config().horizon);
    std::vector<std::vector<double>> samples(n_paths);
    parallel_for(n_paths, [&](std::size_t p) {
        const GridPath b = noise(p);
        std::vector<double> c;
        if constexpr (heat) {
            c = quadrature == DriftQuadrature::Bridge ? bridge_cumulative_integral(f, b, b, hurst)
                                                      : detail::cumulative_integral(f, b, substeps);
        } else {
            c = detail::cumulative_integral(f, b, substeps);
        }
        const std::size_t d = b.dimension;
        samples[p] = increment_power_means(d, [&](std::size_t i, std::size_t k) { return c[i * d + k]; }, lags, m,
                                           b.steps(), true);
    });
    RegularizationReport report;
    report.gamma = gamma;
    report.target = 1.0 + hurst * gamma;
    report.table = moment_table(Quantity::Averaged, m, lags, samples, options);
    report.fit = fit_exponent(report.table);
    return report;
}

/// An ensemble of Euler solutions for one mollified drift, generated per path.
struct SolveSetup {
    std::shared_ptr<const DriftSpec> spec;
    SpatialLattice lattice;
    std::vector<double> x0;
    double hurst = 0.5;
    std::size_t n_steps = 1024;
    double horizon = 1.0;
    std::uint64_t master_seed = 0;
    DriftQuadrature quadrature = DriftQuadrature::Bridge;

    FbmConfig fbm() const { return FbmConfig{hurst, horizon, n_steps, spec->dimension}; }

    /// Euler solution for drift b; `eps` sizes the segment sub-cells.
    SolutionPath solve(const SmoothedDrift& b, double eps, const GridPath& noise) const {
        if (quadrature == DriftQuadrature::Bridge) {
            return euler_solve_bridge(b, x0, hurst, noise);
        }
        const double dt = horizon / static_cast<double>(n_steps);
        return euler_solve_field(b, x0, plan_substeps(hurst, dt, eps), noise);
    }

    /// Cumulative int_0^t f(y_r) dr along y driven by `noise`, with the same quadrature.
    std::vector<double> integral(const SmoothedDrift& f, double eps, const GridPath& y, const GridPath& noise) const {
        if (quadrature == DriftQuadrature::Bridge) {
            return bridge_cumulative_integral(f, y, noise, hurst);
        }
        const double dt = horizon / static_cast<double>(n_steps);
        return detail::cumulative_integral(f, y, plan_substeps(hurst, dt, eps));
    }
};

/// Fraction of paths whose sup over dyadic pairs of |K_{s,t}| / (t-s)^{exponent} exceeds M.
struct TightnessReport {
    double exponent = 0.0;              ///< 1 + H beta
    std::vector<double> M_grid;
    std::vector<int> levels;            ///< mollification levels n, eps_n = 4^{-n}
    std::vector<double> scales;
    LagWindow pairs;                    ///< dyadic pair levels actually used
    std::vector<std::vector<double>> exceedance;  ///< [level][M]
    std::vector<double> slopes;         ///< log-log slope of exceedance vs M per level
    double worst_slope = 0.0;
    double reference_M = 0.0;
    double uniformity_ratio = 0.0;      ///< max/min exceedance across levels at reference_M
    bool monotone = true;
    std::size_t box_exits = 0;
    bool passes = false;
};

struct TightnessOptions {
    std::vector<int> levels{4, 5, 6, 7, 8, 9, 10};
    std::vector<double> M_grid;          ///< empty: quantiles of the pooled modulus
    LagWindow pairs{0, 10};
    std::size_t n_paths = 1000;
    double slope_max = -0.7;
    double uniformity_factor = 3.0;
    /// Pooled exceedance level that picks the reference M for uniformity.
    double reference_exceedance = 0.1;
    /// Pairs below cut * eps^{1/(2H)} at the coarsest level are dropped; 0 keeps all.
    double singular_cut = 10.0;
};

/// Modulus statistic sup_{pairs} |K_{s,t}| / (t-s)^{exponent} of one path (l1 norm).
inline double modulus_ratio(const GridPath& k, const std::vector<Lag>& lags, double exponent) {
    double worst = 0.0;
    const std::size_t n = k.steps();
    for (const Lag& lag : lags) {
        const double scale = std::pow(lag.length, exponent);
        for (std::size_t s = 0; s + lag.stride <= n; s += lag.stride) {
            worst = std::max(worst, random_control(k, s, s + lag.stride) / scale);
        }
    }
    return worst;
}

inline TightnessReport tightness_experiment(const SolveSetup& setup, const TightnessOptions& options) {
    require(setup.spec != nullptr, "tightness_experiment: no drift");
    check_drift_regularity(setup.spec->declared_beta, setup.hurst);
    require(!options.levels.empty(), "tightness_experiment: no mollification levels");
    TightnessReport report;
    report.exponent = 1.0 + setup.hurst * setup.spec->declared_beta;
    report.levels = options.levels;
    const FbmConfig cfg = setup.fbm();
    const NoiseSource noise(cfg, setup.master_seed);
    const int coarsest = *std::min_element(options.levels.begin(), options.levels.end());
    report.pairs = options.singular_cut > 0.0 ? singular_window(options.pairs, cfg.horizon, setup.hurst,
                                                                std::pow(4.0, -coarsest), options.singular_cut)
                                              : options.pairs;
    const auto lags = make_lags(report.pairs, cfg.n_steps, cfg.horizon);
    std::vector<std::vector<double>> ratios;
    for (int level : options.levels) {
        const double eps = std::pow(4.0, -level);
        report.scales.push_back(eps);
        const SmoothedDrift b(setup.spec, eps, setup.lattice);
        std::vector<double> r(options.n_paths);
        std::vector<char> exited(options.n_paths, 0);
        parallel_for(options.n_paths, [&](std::size_t p) {
            const SolutionPath sol = setup.solve(b, eps, noise(p));
            exited[p] = sol.completed() ? 0 : 1;
            r[p] = sol.completed() ? modulus_ratio(sol.K, lags, report.exponent) : 0.0;
        });
        for (char e : exited) {
            report.box_exits += static_cast<std::size_t>(e);
        }
        ratios.push_back(std::move(r));
    }
    std::vector<double> pooled;
    for (const auto& r : ratios) {
        pooled.insert(pooled.end(), r.begin(), r.end());
    }
    report.M_grid = options.M_grid;
    if (report.M_grid.empty()) {
        for (double q : {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99}) {
            report.M_grid.push_back(stats::quantile(pooled, q));
        }
    }
    for (std::size_t k = 1; k < report.M_grid.size(); ++k) {
        require(report.M_grid[k] > report.M_grid[k - 1], "tightness_experiment: M grid must be increasing");
    }
    report.reference_M = stats::quantile(pooled, 1.0 - options.reference_exceedance);
    auto exceed = [](const std::vector<double>& r, double M) {
        std::size_t count = 0;
        for (double v : r) {
            count += v > M ? 1 : 0;
        }
        return static_cast<double>(count) / static_cast<double>(r.size());
    };
    report.worst_slope = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const auto& r : ratios) {
        std::vector<double> row, lx, ly;
        for (double M : report.M_grid) {
            row.push_back(exceed(r, M));
            if (row.size() > 1 && row.back() > row[row.size() - 2]) {
                report.monotone = false;
            }
            if (row.back() > 0.0 && M > 0.0) {
                lx.push_back(std::log(M));
                ly.push_back(std::log(row.back()));
            }
        }
        const double slope = lx.size() >= 2 ? stats::weighted_fit(lx, ly).slope : -std::numeric_limits<double>::infinity();
        report.slopes.push_back(slope);
        report.worst_slope = std::max(report.worst_slope, slope);
        report.exceedance.push_back(std::move(row));
        const double at_ref = exceed(r, report.reference_M);
        lo = std::min(lo, at_ref);
        hi = std::max(hi, at_ref);
    }
    report.uniformity_ratio = lo > 0.0 ? hi / lo : (hi > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    report.passes = report.monotone && report.box_exits == 0 && report.worst_slope <= options.slope_max &&
                    report.uniformity_ratio <= options.uniformity_factor;
    return report;
}

/// Coupled-noise comparison of two mollifier families along the diagonal k = n:
/// A1 = sup_t |int b^n(X^n) - int b^n(X~^n)|, A2 = sup_t |int (b^n - b~^n)(X~^n)|,
/// A3 = sup_t |int b~^n(X~^n) - K~^n| (quadrature against the Euler drift part).
struct StabilityReport {
    std::vector<double> scales;
    std::vector<double> a1, a2, a3;  ///< path means of the sup-norm terms per level
    double a1_slope = 0.0;           ///< log-log slope of a1 vs eps
    double a2_slope = 0.0;
    double ks = 0.0;                 ///< first coordinate of X_T at the finest level
    double ks_critical = 0.0;
    double wasserstein = 0.0;
    std::size_t ks_paths = 0;
    bool decays = false;
    bool passes = false;
};

struct StabilityOptions {
    MollifierSchedule family_a = MollifierSchedule::geometric(4.0, 4, 10, MollifierKernel::GaussianHeat);
    MollifierSchedule family_b = MollifierSchedule::geometric(4.0, 4, 10, MollifierKernel::CompactBump);
    std::size_t diagnostic_paths = 200;
    std::size_t ks_paths = 10000;
    double alpha = 0.01;
    bool check_families = true;
};

/// Point mass weights / cell volume at the nearest lattice node of each atom.
inline GridFunction lattice_measure(const DriftSpec& spec, const SpatialLattice& lattice) {
    require(spec.atomic(), "lattice_measure: drift is not an atomic measure");
    GridFunction f(lattice, spec.dimension);
    for (const auto& atom : spec.measure().atoms) {
        std::size_t flat = 0;
        for (std::size_t a = 0; a < lattice.dimension; ++a) {
            const double k = std::round((atom.location[a] + lattice.half_width) / lattice.spacing());
            require(k >= 0.0 && k < static_cast<double>(lattice.points), "lattice_measure: atom outside the lattice");
            flat = flat * lattice.points + static_cast<std::size_t>(k);
        }
        for (std::size_t c = 0; c < spec.dimension; ++c) {
            f.component(c)[flat] += atom.weight[c] / lattice.cell_volume();
        }
    }
    return f;
}

inline StabilityReport stability_experiment(const SolveSetup& setup, const StabilityOptions& options) {
    require(setup.spec != nullptr, "stability_experiment: no drift");
    options.family_a.validate();
    options.family_b.validate();
    if (options.family_a.scales.size() != options.family_b.scales.size()) {
        throw ConfigError("stability: the two families need the same number of levels");
    }
    check_drift_regularity(setup.spec->declared_beta, setup.hurst);
    if (options.check_families && setup.spec->atomic()) {
        const GridFunction limit = lattice_measure(*setup.spec, setup.lattice);
        for (const auto* family : {&options.family_a, &options.family_b}) {
            const auto seq = build_approximating_sequence(*setup.spec, *family, setup.lattice);
            const auto check = check_beta_minus(seq, limit, setup.spec->declared_beta);
            if (!check.passes) {
                std::ostringstream msg;
                msg << "stability: the " << to_string(family->kernel)
                    << " family fails the approximating-sequence check at beta=" << setup.spec->declared_beta;
                throw ConfigError(msg.str());
            }
        }
    }
    StabilityReport report;
    const FbmConfig cfg = setup.fbm();
    const NoiseSource noise(cfg, setup.master_seed);
    const std::size_t d = setup.spec->dimension;
    const std::size_t levels = options.family_a.scales.size();
    std::vector<double> ka, kb;
    for (std::size_t l = 0; l < levels; ++l) {
        const double eps_a = options.family_a.scales[l];
        const double eps_b = options.family_b.scales[l];
        report.scales.push_back(eps_a);
        const SmoothedDrift ba(setup.spec, eps_a, setup.lattice, options.family_a.kernel);
        const SmoothedDrift bb(setup.spec, eps_b, setup.lattice, options.family_b.kernel);
        const bool finest = l + 1 == levels;
        const std::size_t paths = finest ? std::max(options.diagnostic_paths, options.ks_paths) : options.diagnostic_paths;
        std::vector<std::array<double, 3>> terms(paths);
        std::vector<double> xa(finest ? paths : 0), xb(finest ? paths : 0);
        parallel_for(paths, [&](std::size_t p) {
            const GridPath b = noise(p);
            const SolutionPath sa = setup.solve(ba, eps_a, b);
            const SolutionPath sb = setup.solve(bb, eps_b, b);
            if (!sa.completed() || !sb.completed()) {
                throw BoxExitError("stability_experiment: a solution left the lattice box");
            }
            if (finest) {
                xa[p] = sa.X(cfg.n_steps, 0);
                xb[p] = sb.X(cfg.n_steps, 0);
            }
            if (p >= options.diagnostic_paths) {
                return;
            }
            const double eps = std::min(eps_a, eps_b);
            const auto ia = setup.integral(ba, eps, sa.X, b);
            const auto iab = setup.integral(ba, eps, sb.X, b);
            const auto ib = setup.integral(bb, eps, sb.X, b);
            terms[p][0] = detail::sup_l1_gap(ia, iab, d);
            terms[p][1] = detail::sup_l1_gap(iab, ib, d);
            terms[p][2] = detail::sup_l1_gap(ib, sb.K.values, d);
        });
        double s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t p = 0; p < options.diagnostic_paths; ++p) {
            s1 += terms[p][0];
            s2 += terms[p][1];
            s3 += terms[p][2];
        }
        const double np = static_cast<double>(options.diagnostic_paths);
        report.a1.push_back(s1 / np);
        report.a2.push_back(s2 / np);
        report.a3.push_back(s3 / np);
        if (finest) {
            ka = std::move(xa);
            kb = std::move(xb);
        }
    }
    report.ks_paths = ka.size();
    report.ks = stats::ks_statistic(ka, kb);
    report.ks_critical = stats::ks_critical_two_sample(ka.size(), kb.size(), options.alpha);
    report.wasserstein = stats::wasserstein1(ka, kb);
    std::vector<double> le;
    for (double eps : report.scales) {
        le.push_back(std::log(eps));
    }
    auto slope = [&](const std::vector<double>& a) {
        std::vector<double> x, y;
        for (std::size_t l = 0; l < a.size(); ++l) {
            if (a[l] > 0.0) {
                x.push_back(le[l]);
                y.push_back(std::log(a[l]));
            }
        }
        return x.size() >= 2 ? stats::weighted_fit(x, y).slope : 0.0;
    };
    report.a1_slope = levels >= 2 ? slope(report.a1) : 0.0;
    report.a2_slope = levels >= 2 ? slope(report.a2) : 0.0;
    auto decays = [](const std::vector<double>& a, double s) {
        return a.back() == 0.0 || (s > 0.0 && a.back() < a.front());
    };
    report.decays = levels >= 2 && decays(report.a1, report.a1_slope) && decays(report.a2, report.a2_slope);
    report.passes = report.decays && report.ks < report.ks_critical;
    return report;
}

/// One asserted check of a composite run; `anchor` names the statement it tests.
struct Gate {
    std::string name;
    std::string anchor;
    double value = 0.0;
    double target = 0.0;
    std::string relation;  ///< how value compares to target, e.g. ">=" or "<="
    bool passed = false;
};

/// Sizes of one flagship run. The lattice must resolve the compact bump at the
/// finest stability level, sqrt(eps) of several cells.
struct FlagshipOptions {
    std::size_t n_steps = 1024;
    std::size_t moment_paths = 2000;
    std::size_t tightness_paths = 500;
    std::size_t stability_paths = 200;
    std::size_t ks_paths = 2000;
    int tightness_lo = 4;
    int tightness_hi = 10;
    int stability_lo = 4;
    int stability_hi = 10;
    double moment_eps = 1e-4;
    LagWindow window{3, 10};
    double tolerance = 0.1;
    std::uint64_t master_seed = 1;
    SpatialLattice lattice{1, 8.0, 65536};

    static FlagshipOptions defaults(std::size_t d) {
        FlagshipOptions o;
        if (d >= 2) {
            o.lattice = SpatialLattice{d, 6.0, 1024};
            o.stability_lo = 2;
            o.stability_hi = 5;
        }
        return o;
    }
};

struct FlagshipReport {
    std::size_t dimension = 1;
    double hurst = 0.0;
    double beta = 0.0;
    std::vector<Gate> gates;
    MomentTable moments;
    ExponentFit moment_fit;
    TightnessReport tightness;
    StabilityReport stability;
    bool passes = false;
};

/// Hypothesis gate H < 1/(2d) for finite measures.
inline void check_flagship_gate(std::size_t d, double hurst) {
    if (hurst < 1.0 / (2.0 * static_cast<double>(d))) {
        return;
    }
    std::ostringstream msg;
    msg << "measure drift gate H < 1/(2d) violated: d=" << d << " requires H<" << 1.0 / (2.0 * static_cast<double>(d))
        << ", got H=" << hurst;
    throw ConfigError(msg.str());
}

/// The unit-weight Dirac mass at the origin, weight (1, ..., 1).
inline DriftSpec flagship_drift(std::size_t d) { return DriftSpec::dirac(d, std::vector<double>(d, 1.0)); }

inline FlagshipReport measure_flagship(std::size_t d, double hurst, const FlagshipOptions& options) {
    check_flagship_gate(d, hurst);
    FlagshipReport report;
    report.dimension = d;
    report.hurst = hurst;
    auto spec = std::make_shared<const DriftSpec>(flagship_drift(d));
    report.beta = spec->declared_beta;
    check_drift_regularity(report.beta, hurst);
    SolveSetup setup;
    setup.spec = spec;
    require(options.lattice.dimension == d, "measure_flagship: lattice dimension differs from d");
    setup.lattice = options.lattice;
    setup.x0.assign(d, 0.0);
    setup.hurst = hurst;
    setup.n_steps = options.n_steps;
    setup.master_seed = options.master_seed;
    const double exponent = 1.0 + hurst * report.beta;

    // moments and monotonicity at the moment scale
    const FbmConfig cfg = setup.fbm();
    const NoiseSource noise(cfg, setup.master_seed);
    const SmoothedDrift b(spec, options.moment_eps, setup.lattice);
    const LagWindow window = singular_window(options.window, cfg.horizon, hurst, options.moment_eps);
    const auto lags = make_lags(window, cfg.n_steps, cfg.horizon);
    std::vector<std::vector<double>> samples(options.moment_paths);
    std::vector<char> monotone(options.moment_paths, 1);
    parallel_for(options.moment_paths, [&](std::size_t p) {
        const SolutionPath sol = setup.solve(b, options.moment_eps, noise(p));
        if (!sol.completed()) {
            throw BoxExitError("measure_flagship: a solution left the lattice box");
        }
        for (std::size_t i = 0; i < cfg.n_steps && monotone[p]; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                if (sol.K(i + 1, c) < sol.K(i, c)) {
                    monotone[p] = 0;
                }
            }
        }
        samples[p] = solution_moments(sol, Quantity::K, 2.0, lags);
    });
    MomentOptions mopt;
    mopt.bootstrap_seed = options.master_seed;
    mopt.min_paths = std::min<std::size_t>(mopt.min_paths, options.moment_paths);
    report.moments = moment_table(Quantity::K, 2.0, lags, samples, mopt);
    report.moment_fit = fit_exponent(report.moments);
    const double monotone_fraction =
        static_cast<double>(std::count(monotone.begin(), monotone.end(), 1)) / static_cast<double>(monotone.size());

    TightnessOptions topt;
    topt.n_paths = options.tightness_paths;
    topt.levels.clear();
    for (int n = options.tightness_lo; n <= options.tightness_hi; ++n) {
        topt.levels.push_back(n);
    }
    topt.pairs = LagWindow{0, static_cast<int>(std::log2(static_cast<double>(options.n_steps)))};
    report.tightness = tightness_experiment(setup, topt);

    StabilityOptions sopt;
    sopt.family_a =
        MollifierSchedule::geometric(4.0, options.stability_lo, options.stability_hi, MollifierKernel::GaussianHeat);
    sopt.family_b =
        MollifierSchedule::geometric(4.0, options.stability_lo, options.stability_hi, MollifierKernel::CompactBump);
    sopt.diagnostic_paths = options.stability_paths;
    sopt.ks_paths = options.ks_paths;
    report.stability = stability_experiment(setup, sopt);

    auto gate = [&](std::string name, std::string anchor, double value, double target, std::string rel, bool ok) {
        report.gates.push_back(Gate{std::move(name), std::move(anchor), value, target, std::move(rel), ok});
    };
    gate("K monotone", "componentwise monotone drift part for a nonnegative drift", monotone_fraction, 1.0, "==",
         monotone_fraction == 1.0);
    gate("K moment slope", "L^m increment bound (t-s)^{1+beta H}", report.moment_fit.slope,
         exponent - options.tolerance, ">=", report.moment_fit.slope >= exponent - options.tolerance);
    gate("tightness slope", "modulus exceedance P(K not in A_M) <= C/M", report.tightness.worst_slope, -0.7, "<=",
         report.tightness.worst_slope <= -0.7);
    gate("tightness uniformity", "tightness of the approximating drift parts", report.tightness.uniformity_ratio, 3.0,
         "<=", report.tightness.uniformity_ratio <= 3.0 && report.tightness.monotone);
    gate("stability KS", "mollifier independence of the limit law", report.stability.ks, report.stability.ks_critical,
         "<", report.stability.ks < report.stability.ks_critical);
    gate("stability decay", "A1 + A2 + A3 decomposition decays along the diagonal", report.stability.a2_slope, 0.0, ">",
         report.stability.decays);
    report.passes = std::all_of(report.gates.begin(), report.gates.end(), [](const Gate& g) { return g.passed; });
    return report;
}

} // namespace fbmlab
