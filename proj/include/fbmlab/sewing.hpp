#pragma once

// Germ A_{s,t} = int_s^t h(B_r + K_s) dr along a solved path, its exact
// conditional defect E^u[delta A_{s,u,t}] through the Gaussian conditional
// law of fBm and the heat semigroup, Riemann-sum convergence to
// K^h = int h(X_r) dr, the averaging operator T^B and nonlinear Young sums.

#include "fbmlab/besov.hpp"
#include "fbmlab/drift.hpp"
#include "fbmlab/errors.hpp"
#include "fbmlab/fbm.hpp"
#include "fbmlab/parallel.hpp"
#include "fbmlab/solve.hpp"
#include "fbmlab/stats.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <map>
#include <vector>

namespace fbmlab {

template <class F>
concept PointField = requires(const F& f, const double* x, double* out) {
    { f.evaluate(x, out) } -> std::convertible_to<bool>;
};

/// The pieces of a solution the germ needs: the noise as seen from x0
/// (X - K = x0 + B) and the drift part K.
struct SewingPath {
    GridPath noise;
    GridPath K;

    static SewingPath from(const SolutionPath& sol) {
        require(sol.completed(), "SewingPath: solution left the lattice box");
        SewingPath p{sol.X, sol.K};
        for (std::size_t i = 0; i < p.noise.values.size(); ++i) {
            p.noise.values[i] = sol.X.values[i] - sol.K.values[i];
        }
        return p;
    }

    /// B itself, i.e. noise - x0.
    GridPath fbm() const {
        GridPath b = noise;
        b.kind = PathKind::B;
        for (std::size_t i = 0; i < b.size(); ++i) {
            for (std::size_t c = 0; c < b.dimension; ++c) {
                b(i, c) -= noise(0, c);
            }
        }
        return b;
    }
};

namespace detail {

/// Composite trapezoid of r -> f(y_r + shift_r) over grid cells [s, t], with
/// `substeps` equal sub-cells per grid cell and y, shift linear in each cell.
/// shift(i, theta, out) fills the additive shift at r_i + theta dt.
template <PointField Field, class Shift>
std::vector<double> path_quadrature(const Field& f, const GridPath& y, std::size_t s, std::size_t t,
                                    std::size_t substeps, Shift&& shift) {
    require(s <= t && t < y.size(), "path quadrature: requires s <= t within the grid");
    require(substeps >= 1, "path quadrature: substeps must be >= 1");
    const std::size_t d = y.dimension;
    std::vector<double> acc(d, 0.0), x(d), val(d), sh(d);
    const double inv_s = 1.0 / static_cast<double>(substeps);
    auto eval = [&](std::size_t i, double theta, double weight) {
        shift(i, theta, sh.data());
        for (std::size_t c = 0; c < d; ++c) {
            const double yi = theta == 0.0 ? y(i, c) : y(i, c) + theta * (y(i + 1, c) - y(i, c));
            x[c] = yi + sh[c];
        }
        if (!f.evaluate(x.data(), val.data())) {
            throw BoxExitError("germ argument left the lattice box");
        }
        for (std::size_t c = 0; c < d; ++c) {
            acc[c] += weight * val[c];
        }
    };
    for (std::size_t i = s; i < t; ++i) {
        const double h = (y.times[i + 1] - y.times[i]) * inv_s;
        eval(i, 0.0, 0.5 * h);
        for (std::size_t q = 1; q < substeps; ++q) {
            eval(i, static_cast<double>(q) * inv_s, h);
        }
        // right endpoint of the cell, evaluated as theta = 1 of cell i
        shift(i, 1.0, sh.data());
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = y(i + 1, c) + sh[c];
        }
        if (!f.evaluate(x.data(), val.data())) {
            throw BoxExitError("germ argument left the lattice box");
        }
        for (std::size_t c = 0; c < d; ++c) {
            acc[c] += 0.5 * h * val[c];
        }
    }
    return acc;
}

inline double l1(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) {
        acc += std::abs(x);
    }
    return acc;
}

} // namespace detail

/// A_{s,t} = int_s^t h(noise_r + K_s) dr; s, t are grid indices.
template <PointField Field>
std::vector<double> germ_eval(const Field& h, const SewingPath& path, std::size_t s, std::size_t t,
                              std::size_t substeps = 1) {
    const std::size_t d = path.K.dimension;
    return detail::path_quadrature(h, path.noise, s, t, substeps, [&](std::size_t, double, double* out) {
        for (std::size_t c = 0; c < d; ++c) {
            out[c] = path.K(s, c);
        }
    });
}

/// delta A_{s,u,t} = int_u^t [h(noise_r + K_s) - h(noise_r + K_u)] dr.
template <PointField Field>
std::vector<double> germ_defect(const Field& h, const SewingPath& path, std::size_t s, std::size_t u, std::size_t t,
                                std::size_t substeps = 1) {
    require(s <= u && u <= t, "germ_defect: requires s <= u <= t");
    auto a = germ_eval(h, path, s, t, substeps);
    const auto left = germ_eval(h, path, s, u, substeps);
    const auto right = germ_eval(h, path, u, t, substeps);
    for (std::size_t c = 0; c < a.size(); ++c) {
        a[c] -= left[c] + right[c];
    }
    return a;
}

/// K^h_{s,t} = int_s^t h(X_r) dr with X = noise + K linear within cells.
template <PointField Field>
std::vector<double> drift_integral(const Field& h, const SewingPath& path, std::size_t s, std::size_t t,
                                   std::size_t substeps = 1) {
    const std::size_t d = path.K.dimension;
    return detail::path_quadrature(h, path.noise, s, t, substeps, [&](std::size_t i, double theta, double* out) {
        for (std::size_t c = 0; c < d; ++c) {
            out[c] = theta == 0.0 ? path.K(i, c) : path.K(i, c) + theta * (path.K(i + 1, c) - path.K(i, c));
        }
    });
}

/// T^B_t b(x) = int_0^t b(x + B_r) dr.
template <PointField Field>
std::vector<double> averaging_operator(const Field& b, const GridPath& noise, std::size_t t, std::span<const double> x,
                                       std::size_t substeps = 1) {
    require(x.size() == noise.dimension, "averaging_operator: x has the wrong dimension");
    return detail::path_quadrature(b, noise, 0, t, substeps, [&](std::size_t, double, double* out) {
        std::copy(x.begin(), x.end(), out);
    });
}

/// Grid indices 0 = t_0 < ... < t_{2^level} = t.
inline std::vector<std::size_t> dyadic_partition(std::size_t t, int level) {
    require(level >= 0, "dyadic_partition: negative level");
    const std::size_t pieces = std::size_t{1} << level;
    require(t % pieces == 0, "dyadic_partition: grid index not divisible by 2^level");
    std::vector<std::size_t> p(pieces + 1);
    for (std::size_t i = 0; i <= pieces; ++i) {
        p[i] = i * (t / pieces);
    }
    return p;
}

inline void check_partition(const std::vector<std::size_t>& partition) {
    require(partition.size() >= 2, "partition needs at least one interval");
    for (std::size_t i = 1; i < partition.size(); ++i) {
        require(partition[i] > partition[i - 1], "partition must be strictly increasing");
    }
}

/// Sum over the partition of A_{t_i, t_{i+1}}.
template <PointField Field>
std::vector<double> riemann_sum(const Field& h, const SewingPath& path, const std::vector<std::size_t>& partition,
                                std::size_t substeps = 1) {
    check_partition(partition);
    std::vector<double> acc(path.K.dimension, 0.0);
    for (std::size_t i = 0; i + 1 < partition.size(); ++i) {
        const auto a = germ_eval(h, path, partition[i], partition[i + 1], substeps);
        for (std::size_t c = 0; c < acc.size(); ++c) {
            acc[c] += a[c];
        }
    }
    return acc;
}

/// sum_i T^B_{t_i, t_{i+1}} b(Xt_{t_i}) = sum_i int_{t_i}^{t_{i+1}} b(Xt_{t_i} + B_r) dr.
template <PointField Field>
std::vector<double> nonlinear_young_sum(const Field& b, const GridPath& xt, const GridPath& noise,
                                        const std::vector<std::size_t>& partition, std::size_t substeps = 1) {
    require(xt.size() == noise.size() && xt.dimension == noise.dimension,
            "nonlinear_young_sum: paths must share one grid");
    check_partition(partition);
    const std::size_t d = noise.dimension;
    std::vector<double> acc(d, 0.0);
    for (std::size_t i = 0; i + 1 < partition.size(); ++i) {
        const std::size_t a = partition[i];
        const auto piece = detail::path_quadrature(b, noise, a, partition[i + 1], substeps,
                                                   [&](std::size_t, double, double* out) {
                                                       for (std::size_t c = 0; c < d; ++c) {
                                                           out[c] = xt(a, c);
                                                       }
                                                   });
        for (std::size_t c = 0; c < d; ++c) {
            acc[c] += piece[c];
        }
    }
    return acc;
}

struct RiemannLevel {
    int level = 0;
    double mesh = 0.0;
    double error = 0.0;  ///< |K^h_t - sum A| (l1)
    double bound = 0.0;  ///< c1(h) |Pi| |K_t - K_0|
    bool holds = false;
};

struct RiemannReport {
    std::vector<double> target;  ///< K^h_t
    std::vector<RiemannLevel> levels;
    bool all_hold = false;
};

/// Dyadic Riemann sums of the germ against K^h_t and the pathwise bound
/// |K^h_t - sum A| <= c1 |Pi| |K_t - K_0|.
template <PointField Field>
RiemannReport riemann_convergence(const Field& h, double c1, const SewingPath& path, std::size_t t,
                                  const std::vector<int>& levels, std::size_t substeps = 1) {
    RiemannReport report;
    report.target = drift_integral(h, path, 0, t, substeps);
    const double control = random_control(path.K, 0, t);
    report.all_hold = true;
    for (int level : levels) {
        const auto partition = dyadic_partition(t, level);
        const auto sum = riemann_sum(h, path, partition, substeps);
        RiemannLevel row;
        row.level = level;
        row.mesh = path.K.times[partition[1]] - path.K.times[0];
        for (std::size_t c = 0; c < sum.size(); ++c) {
            row.error += std::abs(report.target[c] - sum[c]);
        }
        row.bound = c1 * row.mesh * control;
        row.holds = row.error <= row.bound * (1.0 + 1e-9) + 1e-15;
        report.all_hold = report.all_hold && row.holds;
        report.levels.push_back(row);
    }
    return report;
}

/// Nonincreasing map tau -> c1_norm(G_tau h) tabulated on a geometric grid.
/// Lookups return the entry at the largest tabulated tau <= the query, so
/// they never undershoot the true value.
class C1Profile {
public:
    C1Profile() = default;

    C1Profile(const SmoothedDrift& h, double tau_max, double tau_min, double ratio = std::sqrt(2.0)) {
        require(tau_max > 0.0 && tau_min > 0.0 && ratio > 1.0, "C1Profile: bad grid");
        taus_.push_back(0.0);
        for (double tau = tau_min; tau < tau_max * ratio; tau *= ratio) {
            taus_.push_back(tau);
        }
        values_.resize(taus_.size());
        parallel_for(taus_.size(), [&](std::size_t k) {
            values_[k] = taus_[k] == 0.0 ? c1_norm(h.grid()) : c1_norm(h.heat(taus_[k]).grid());
        });
    }

    double operator()(double tau) const {
        const auto it = std::upper_bound(taus_.begin(), taus_.end(), tau);
        return values_[static_cast<std::size_t>(it - taus_.begin()) - 1];
    }

    const std::vector<double>& taus() const { return taus_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> taus_;
    std::vector<double> values_;
};

struct DefectOptions {
    /// Gauss-Legendre nodes per grid cell.
    static constexpr int nodes = 8;
    /// Grading exponent theta = phi^p on the first cell, where the conditional
    /// variance vanishes like (r - u)^{2H}.
    double grading = 4.0;
};

struct ConditionalDefect {
    std::vector<double> value;  ///< E^u[delta A_{s,u,t}]
    double bound = 0.0;         ///< int_u^t c1(G_{sigma^2} h) |K_u - K_s| dr
};

/// E^u[delta A_{s,u,t}] = int_u^t [G_{s2} h(m_r + K_s) - G_{s2} h(m_r + K_u)] dr
/// with s2 = sigma^2_{u,r}, m_r = E^u[x0 + B_r]. Between grid points the mean
/// is linear and the variance linear, except on the first cell where it is
/// sigma^2_{u,u+1} theta^{2H}.
class DefectEngine {
public:
    DefectEngine(const SmoothedDrift& h, const VolterraKernel& kernel, const C1Profile* profile = nullptr,
                 DefectOptions options = {})
        : h_(&h), kernel_(&kernel), profile_(profile), options_(options) {
        const auto& ab = boost::math::quadrature::gauss<double, DefectOptions::nodes>::abscissa();
        const auto& wt = boost::math::quadrature::gauss<double, DefectOptions::nodes>::weights();
        for (std::size_t k = 0; k < ab.size(); ++k) {
            for (double sign : {-1.0, 1.0}) {
                nodes_.push_back(0.5 * (1.0 + sign * ab[k]));
                weights_.push_back(0.5 * wt[k]);
            }
        }
    }

    /// Conditional variance sigma^2_{u,r}, cached since it is path independent.
    double variance(std::size_t u, std::size_t r) const {
        if (u == r) {
            return 0.0;
        }
        std::lock_guard lock(mutex_);
        auto [it, inserted] = variance_.try_emplace({u, r}, 0.0);
        if (inserted) {
            it->second = conditional_variance(*kernel_, u, r);
        }
        return it->second;
    }

    ConditionalDefect evaluate(const ConditionalLaw& law, const SewingPath& path, std::size_t s, std::size_t u,
                               std::size_t t) const {
        require(s <= u && u <= t && t < path.K.size(), "conditional_defect: requires s <= u <= t on the grid");
        const std::size_t d = path.K.dimension;
        ConditionalDefect out;
        out.value.assign(d, 0.0);
        double dk = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            dk += std::abs(path.K(u, c) - path.K(s, c));
        }
        if (u == t) {
            return out;
        }
        const double hurst = kernel_->hurst();
        std::vector<double> m0(d), m1(d), xs(d), xu(d), vs(d), vu(d);
        auto mean_at = [&](std::size_t r, std::vector<double>& m) {
            for (std::size_t c = 0; c < d; ++c) {
                m[c] = r == u ? path.noise(u, c) : path.noise(0, c) + law.mean(u, r, c);
            }
        };
        mean_at(u, m0);
        double v0 = 0.0;
        for (std::size_t i = u; i < t; ++i) {
            mean_at(i + 1, m1);
            const double v1 = variance(u, i + 1);
            const double dt = path.K.times[i + 1] - path.K.times[i];
            for (std::size_t q = 0; q < nodes_.size(); ++q) {
                double theta = nodes_[q];
                double w = weights_[q] * dt;
                double var = 0.0;
                if (i == u) {
                    const double phi = theta;
                    theta = std::pow(phi, options_.grading);
                    w *= options_.grading * std::pow(phi, options_.grading - 1.0);
                    var = v1 * std::pow(theta, 2.0 * hurst);
                } else {
                    var = v0 + theta * (v1 - v0);
                }
                for (std::size_t c = 0; c < d; ++c) {
                    const double m = m0[c] + theta * (m1[c] - m0[c]);
                    xs[c] = m + path.K(s, c);
                    xu[c] = m + path.K(u, c);
                }
                if (!h_->evaluate_heat(var, xs.data(), vs.data()) || !h_->evaluate_heat(var, xu.data(), vu.data())) {
                    throw BoxExitError("conditional defect argument left the lattice box");
                }
                for (std::size_t c = 0; c < d; ++c) {
                    out.value[c] += w * (vs[c] - vu[c]);
                }
                if (profile_ != nullptr) {
                    out.bound += w * (*profile_)(var)*dk;
                }
            }
            m0 = m1;
            v0 = v1;
        }
        return out;
    }

private:
    const SmoothedDrift* h_;
    const VolterraKernel* kernel_;
    const C1Profile* profile_;
    DefectOptions options_;
    std::vector<double> nodes_;
    std::vector<double> weights_;
    mutable std::mutex mutex_;
    mutable std::map<std::pair<std::size_t, std::size_t>, double> variance_;
};

/// One-shot E^u[delta A_{s,u,t}] for a single path.
inline std::vector<double> conditional_defect(const SmoothedDrift& h, const SewingPath& path, std::size_t s,
                                              std::size_t u, std::size_t t, const VolterraKernel& kernel) {
    const ConditionalLaw law(path.fbm(), kernel);
    return DefectEngine(h, kernel).evaluate(law, path, s, u, t).value;
}

struct SewingOptions {
    int level_lo = 3;
    int level_hi = 9;
    double m = 2.0;
    std::size_t germ_substeps = 1;
    std::size_t min_level_samples = 20;
    double envelope_quantile = 0.9;
    double profile_ratio = std::sqrt(2.0);
};

struct RemainderRow {
    int level = 0;
    double lag = 0.0;
    std::size_t samples = 0;
    double max_defect = 0.0;     ///< max |E^u delta A|
    double mean_defect = 0.0;
    double max_control = 0.0;    ///< max lambda(s,t)
    double envelope = 0.0;       ///< upper quantile of |E^u delta A| / lambda^{beta1}
    double lm_defect = 0.0;      ///< ||delta A||_{L^m}
    double lm_germ = 0.0;        ///< ||A_{s,t}||_{L^m}
};

struct SewingReport {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double alpha1 = 0.0;
    double beta1 = 0.0;
    double lm_slope = 0.0;        ///< log-log slope of ||delta A||_{L^m}
    double germ_slope = 0.0;      ///< log-log slope of ||A_{s,t}||_{L^m}
    double epsilon_margin = 0.0;  ///< lm_slope - 1/2
    bool degenerate = false;      ///< all conditional defects vanish
    std::size_t bound_checked = 0;
    std::size_t bound_violations = 0;
    bool passes = false;
    std::vector<RemainderRow> remainder_table;
};

struct DefectSample {
    double control = 0.0;  ///< lambda(s,t)
    double defect = 0.0;   ///< |E^u delta A| (l1)
    double delta = 0.0;    ///< |delta A| (l1)
    double germ = 0.0;     ///< |A_{s,t}| (l1)
    bool bound_ok = true;
};

/// Per-path samples at every dyadic (s, u = mid, t) of the configured levels.
inline std::vector<std::vector<DefectSample>> sewing_samples(const SmoothedDrift& h, const SewingPath& path,
                                                             const DefectEngine& engine, const ConditionalLaw& law,
                                                             const SewingOptions& options) {
    const std::size_t n = path.K.steps();
    std::vector<std::vector<DefectSample>> per_level;
    for (int level = options.level_lo; level <= options.level_hi; ++level) {
        const std::size_t pieces = std::size_t{1} << level;
        require(n % (2 * pieces) == 0, "sewing: n_steps must be divisible by 2^(level_hi+1)");
        const std::size_t len = n / pieces;
        std::vector<DefectSample> row;
        row.reserve(pieces);
        for (std::size_t j = 0; j < pieces; ++j) {
            const std::size_t s = j * len;
            const std::size_t t = s + len;
            const std::size_t u = s + len / 2;
            const ConditionalDefect cd = engine.evaluate(law, path, s, u, t);
            DefectSample sample;
            sample.control = random_control(path.K, s, t);
            sample.defect = detail::l1(cd.value);
            auto a = germ_eval(h, path, s, t, options.germ_substeps);
            sample.germ = detail::l1(a);
            const auto left = germ_eval(h, path, s, u, options.germ_substeps);
            const auto right = germ_eval(h, path, u, t, options.germ_substeps);
            for (std::size_t c = 0; c < a.size(); ++c) {
                a[c] -= left[c] + right[c];
            }
            sample.delta = detail::l1(a);
            sample.bound_ok = sample.defect <= cd.bound * (1.0 + 1e-6) + 1e-15;
            row.push_back(sample);
        }
        per_level.push_back(std::move(row));
    }
    return per_level;
}

/// Fits |E^u delta A_{s,u,t}| <= Gamma1 (t-s)^{alpha1} lambda(s,t)^{beta1} and
/// ||delta A_{s,u,t}||_{L^m} <= Gamma2 (t-s)^{1/2+eps} over an ensemble.
/// beta1 is the sample-weighted mean over levels of the log-log OLS slope of
/// the defect against lambda across paths; alpha1 is the slope of an upper
/// quantile of defect / lambda^{beta1} against the lag, and Gamma1 the
/// smallest constant that covers every sample.
inline SewingReport fit_sewing_conditions(const SmoothedDrift& h, const std::vector<SolutionPath>& ensemble,
                                          const VolterraKernel& kernel, const SewingOptions& options = {}) {
    require(!ensemble.empty(), "fit_sewing_conditions: empty ensemble");
    if (options.level_hi - options.level_lo + 1 < 3) {
        throw ConfigError("fit_sewing_conditions: need at least 3 dyadic levels");
    }
    const double horizon = ensemble.front().K.times.back();
    const C1Profile profile(h, std::pow(horizon, 2.0 * kernel.hurst()) * 1.01, 0.01 * h.scale(),
                            options.profile_ratio);
    const DefectEngine engine(h, kernel, &profile);
    std::vector<std::vector<std::vector<DefectSample>>> samples(ensemble.size());
    parallel_for(ensemble.size(), [&](std::size_t p) {
        const SewingPath path = SewingPath::from(ensemble[p]);
        const ConditionalLaw law(path.fbm(), kernel);
        samples[p] = sewing_samples(h, path, engine, law, options);
    });

    SewingReport report;
    const std::size_t levels = static_cast<std::size_t>(options.level_hi - options.level_lo + 1);
    std::vector<std::vector<DefectSample>> pooled(levels);
    for (const auto& per_path : samples) {
        for (std::size_t l = 0; l < levels; ++l) {
            pooled[l].insert(pooled[l].end(), per_path[l].begin(), per_path[l].end());
        }
    }
    double max_defect = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
        RemainderRow row;
        row.level = options.level_lo + static_cast<int>(l);
        row.lag = horizon / std::exp2(row.level);
        row.samples = pooled[l].size();
        double lm = 0.0;
        double lm_germ = 0.0;
        for (const auto& s : pooled[l]) {
            lm_germ += std::pow(s.germ, options.m);
            row.max_defect = std::max(row.max_defect, s.defect);
            row.mean_defect += s.defect;
            row.max_control = std::max(row.max_control, s.control);
            lm += std::pow(s.delta, options.m);
            report.bound_checked += 1;
            report.bound_violations += s.bound_ok ? 0 : 1;
        }
        row.mean_defect /= static_cast<double>(row.samples);
        row.lm_defect = std::pow(lm / static_cast<double>(row.samples), 1.0 / options.m);
        row.lm_germ = std::pow(lm_germ / static_cast<double>(row.samples), 1.0 / options.m);
        max_defect = std::max(max_defect, row.max_defect);
        report.remainder_table.push_back(row);
    }

    // L^m slopes of delta A and of A
    auto lm_fit = [&](auto member) {
        std::vector<double> lx, ly;
        for (const auto& row : report.remainder_table) {
            if (row.*member > 0.0) {
                lx.push_back(std::log(row.lag));
                ly.push_back(std::log(row.*member));
            }
        }
        return lx.size() >= 2 ? stats::weighted_fit(lx, ly)
                              : stats::LinearFit{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 1.0, 0.0};
    };
    const auto defect_fit = lm_fit(&RemainderRow::lm_defect);
    report.lm_slope = defect_fit.slope;
    report.gamma2 = std::exp(defect_fit.intercept);
    report.epsilon_margin = report.lm_slope - 0.5;
    report.germ_slope = lm_fit(&RemainderRow::lm_germ).slope;

    if (max_defect == 0.0) {
        report.degenerate = true;
        report.gamma1 = 0.0;
        report.passes = report.bound_violations == 0 && report.epsilon_margin > 0.0;
        return report;
    }

    // stage 1: beta1 from the spread across paths at fixed lag
    double slope_sum = 0.0;
    double weight_sum = 0.0;
    for (std::size_t l = 0; l < levels; ++l) {
        std::vector<double> bx, by;
        for (const auto& s : pooled[l]) {
            if (s.control > 0.0 && s.defect > 0.0) {
                bx.push_back(std::log(s.control));
                by.push_back(std::log(s.defect));
            }
        }
        if (bx.size() < options.min_level_samples) {
            continue;
        }
        const auto fit = stats::weighted_fit(bx, by);
        slope_sum += fit.slope * static_cast<double>(bx.size());
        weight_sum += static_cast<double>(bx.size());
    }
    if (weight_sum == 0.0) {
        throw ConfigError("fit_sewing_conditions: too few nonzero defects to fit the control exponent");
    }
    report.beta1 = slope_sum / weight_sum;

    // stage 2: alpha1 from an upper quantile of defect / lambda^{beta1} against the lag
    std::vector<double> lx, ly;
    for (std::size_t l = 0; l < levels; ++l) {
        std::vector<double> ratios;
        for (const auto& s : pooled[l]) {
            if (s.control > 0.0 && s.defect > 0.0) {
                ratios.push_back(s.defect / std::pow(s.control, report.beta1));
            }
        }
        if (ratios.size() < options.min_level_samples) {
            continue;
        }
        const double env = stats::quantile(ratios, options.envelope_quantile);
        report.remainder_table[l].envelope = env;
        lx.push_back(std::log(report.remainder_table[l].lag));
        ly.push_back(std::log(env));
    }
    if (lx.size() < 3) {
        throw ConfigError("fit_sewing_conditions: fewer than 3 levels with nonzero defects");
    }
    report.alpha1 = stats::weighted_fit(lx, ly).slope;
    // Gamma1 covers every sample
    for (std::size_t l = 0; l < levels; ++l) {
        const double scale = std::pow(report.remainder_table[l].lag, report.alpha1);
        for (const auto& s : pooled[l]) {
            if (s.control > 0.0) {
                report.gamma1 = std::max(report.gamma1, s.defect / (scale * std::pow(s.control, report.beta1)));
            }
        }
    }
    report.passes = report.alpha1 + report.beta1 > 1.0 && report.epsilon_margin > 0.0 && report.bound_violations == 0;
    return report;
}

} // namespace fbmlab
