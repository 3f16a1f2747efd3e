#pragma once

// Explicit Euler solver for X = x0 + int b(X) ds + B with a smooth (mollified)
// drift, tracking the drift part K = X - x0 - B.

#include "fbmlab/errors.hpp"
#include "fbmlab/fbm.hpp"
#include "fbmlab/lattice.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fbmlab {

struct SolveConfig {
    std::vector<double> x0;
    std::shared_ptr<const GridFunction> drift;
    Interpolation interpolation = Interpolation::Multilinear;
    /// Drift quadrature nodes per noise step along the predicted segment;
    /// 1 is the plain left-point Euler step.
    std::size_t substeps = 1;

    void validate() const {
        if (!drift) {
            throw ConfigError("solve: no drift given");
        }
        if (x0.size() != drift->lattice.dimension || drift->components != drift->lattice.dimension) {
            throw ConfigError("solve: x0, drift and lattice dimensions differ");
        }
        if (substeps < 1) {
            throw ConfigError("solve: substeps must be >= 1");
        }
        for (double v : drift->values) {
            if (!std::isfinite(v)) {
                throw ConfigError("solve: drift has non-finite values");
            }
        }
    }
};

struct BoxExit {
    std::size_t step = 0;
    double time = 0.0;
};

struct SolutionPath {
    GridPath X;
    GridPath K;
    SeedLineage B_ref{};
    std::optional<BoxExit> box_exit;

    bool completed() const { return !box_exit.has_value(); }
};

namespace detail {

/// Shared Euler core; `field(x, out)` returns false outside the domain.
/// X_{i+1} = x0 + K_{i+1} + B_{i+1}, with K_{i+1} - K_i the drift quadrature
/// over the segment from X_i along b(X_i) dt + (B_{i+1} - B_i).
template <class Field>
SolutionPath euler_core(Field&& field, const std::vector<double>& x0, std::size_t substeps, const GridPath& b) {
    const std::size_t d = b.dimension;
    require(x0.size() == d, "euler_solve: x0 dimension differs from the noise");
    const std::size_t n = b.steps();
    SolutionPath sol;
    sol.B_ref = b.lineage;
    sol.X = b;
    sol.X.kind = PathKind::X;
    sol.K = b;
    sol.K.kind = PathKind::K;
    std::fill(sol.K.values.begin(), sol.K.values.end(), 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        sol.X(0, c) = x0[c] + 0.0 + b(0, c);
    }
    std::vector<double> x(d), drift0(d), val(d), pred(d), incr(d), probe(d);
    const double inv_s = 1.0 / static_cast<double>(substeps);
    auto truncate = [&](std::size_t last) {
        sol.X.times.resize(last + 1);
        sol.X.values.resize((last + 1) * d);
        sol.K.times.resize(last + 1);
        sol.K.values.resize((last + 1) * d);
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double dt = b.times[i + 1] - b.times[i];
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = sol.X(i, c);
        }
        if (!field(x.data(), drift0.data())) {
            sol.box_exit = BoxExit{i, b.times[i]};
            truncate(i);
            return sol;
        }
        for (std::size_t c = 0; c < d; ++c) {
            pred[c] = drift0[c] * dt + (b(i + 1, c) - b(i, c));
            incr[c] = drift0[c];
        }
        for (std::size_t q = 1; q < substeps; ++q) {
            const double theta = static_cast<double>(q) * inv_s;
            for (std::size_t c = 0; c < d; ++c) {
                probe[c] = x[c] + theta * pred[c];
            }
            if (!field(probe.data(), val.data())) {
                sol.box_exit = BoxExit{i, b.times[i]};
                truncate(i);
                return sol;
            }
            for (std::size_t c = 0; c < d; ++c) {
                incr[c] += val[c];
            }
        }
        for (std::size_t c = 0; c < d; ++c) {
            sol.K(i + 1, c) = sol.K(i, c) + incr[c] * inv_s * dt;
            sol.X(i + 1, c) = x0[c] + sol.K(i + 1, c) + b(i + 1, c);
        }
    }
    return sol;
}

} // namespace detail

inline SolutionPath euler_solve(const SolveConfig& config, const GridPath& b) {
    require(config.drift != nullptr, "euler_solve: no drift");
    require(b.dimension == config.drift->lattice.dimension, "euler_solve: noise and drift dimensions differ");
    const GridFunction& drift = *config.drift;
    const Interpolation mode = config.interpolation;
    return detail::euler_core([&](const double* x, double* out) { return drift.evaluate(x, out, mode); }, config.x0,
                              config.substeps, b);
}

/// Euler solve against any field with `bool evaluate(const double*, double*) const`.
template <class Field>
SolutionPath euler_solve_field(const Field& field, const std::vector<double>& x0, std::size_t substeps,
                               const GridPath& b) {
    return detail::euler_core([&](const double* x, double* out) { return field.evaluate(x, out); }, x0, substeps, b);
}

/// Drift quadrature within an Euler step: sub-cells along the predicted
/// segment, or Gaussian nodes against the noise bridge.
enum class DriftQuadrature { Segment, Bridge };

inline std::string to_string(DriftQuadrature q) { return q == DriftQuadrature::Segment ? "segment" : "bridge"; }

inline DriftQuadrature drift_quadrature_from_string(const std::string& s) {
    if (s == "segment") {
        return DriftQuadrature::Segment;
    }
    if (s == "bridge") {
        return DriftQuadrature::Bridge;
    }
    throw ConfigError("unknown drift quadrature '" + s + "' (expected segment or bridge)");
}

/// Step quadrature against the noise bridge: given B_{t+dt} - B_t = dB, the
/// increment B_{t+theta dt} - B_t is Gaussian with mean c(theta) dB and
/// variance v(theta) per coordinate. Nodes are Gauss-Legendre on (0, 1).
class BridgeQuadrature {
public:
    static constexpr std::size_t order = 8;

    BridgeQuadrature(double hurst, double dt) {
        require(hurst > 0.0 && hurst < 1.0, "BridgeQuadrature: hurst must lie in (0, 1)");
        require(dt > 0.0, "BridgeQuadrature: dt must be positive");
        const double h2 = 2.0 * hurst;
        const double scale = std::pow(dt, h2);
        const auto& abscissa = boost::math::quadrature::gauss<double, order>::abscissa();
        const auto& w = boost::math::quadrature::gauss<double, order>::weights();
        for (std::size_t k = 0; k < abscissa.size(); ++k) {
            for (int sign : {-1, 1}) {
                if (abscissa[k] == 0.0 && sign < 0) {
                    continue;
                }
                const double theta = 0.5 * (1.0 + sign * abscissa[k]);
                const double c = 0.5 * (std::pow(theta, h2) + 1.0 - std::pow(1.0 - theta, h2));
                theta_.push_back(theta);
                weight_.push_back(0.5 * w[k]);
                mean_.push_back(c);
                variance_.push_back(std::max(0.0, scale * (std::pow(theta, h2) - c * c)));
            }
        }
        dt_ = dt;
    }

    std::size_t size() const { return theta_.size(); }
    double dt() const { return dt_; }
    double theta(std::size_t q) const { return theta_[q]; }
    double weight(std::size_t q) const { return weight_[q]; }
    double mean(std::size_t q) const { return mean_[q]; }
    double variance(std::size_t q) const { return variance_[q]; }

private:
    double dt_ = 0.0;
    std::vector<double> theta_, weight_, mean_, variance_;
};

/// Cumulative int_0^{t_i} f(y_r) dr with the bridge quadrature, where y - b is
/// linear within cells and b is the noise driving y.
template <class Field>
std::vector<double> bridge_cumulative_integral(const Field& f, const GridPath& y, const GridPath& b, double hurst) {
    const std::size_t d = y.dimension;
    const std::size_t n = y.steps();
    require(b.dimension == d && b.steps() >= n, "bridge_cumulative_integral: noise does not cover the path");
    require(n >= 1, "bridge_cumulative_integral: empty grid");
    const double dt = y.times[1] - y.times[0];
    const BridgeQuadrature quad(hurst, dt);
    std::vector<double> out((n + 1) * d, 0.0), probe(d), val(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            out[(i + 1) * d + c] = out[i * d + c];
        }
        for (std::size_t q = 0; q < quad.size(); ++q) {
            for (std::size_t c = 0; c < d; ++c) {
                const double db = b(i + 1, c) - b(i, c);
                const double dk = y(i + 1, c) - y(i, c) - db;
                probe[c] = y(i, c) + quad.theta(q) * dk + quad.mean(q) * db;
            }
            require(f.evaluate_heat(quad.variance(q), probe.data(), val.data()),
                    "bridge_cumulative_integral: path leaves the lattice box");
            for (std::size_t c = 0; c < d; ++c) {
                out[(i + 1) * d + c] += quad.weight(q) * val[c] * dt;
            }
        }
    }
    return out;
}

/// Euler solve with the bridge quadrature. `field.evaluate_heat(v, x, out)`
/// returns G_v b at x. The first pass predicts K along X_i + c(theta) dB, the
/// remaining passes along X_i + theta k + c(theta) dB with k the previous
/// estimate of the step's drift increment. Requires a uniform grid.
template <class Field>
SolutionPath euler_solve_bridge(const Field& field, const std::vector<double>& x0, double hurst, const GridPath& b,
                                std::size_t passes = 2) {
    const std::size_t d = b.dimension;
    require(x0.size() == d, "euler_solve_bridge: x0 dimension differs from the noise");
    require(passes >= 1, "euler_solve_bridge: passes must be positive");
    const std::size_t n = b.steps();
    require(n >= 1, "euler_solve_bridge: empty grid");
    const double dt = b.times[1] - b.times[0];
    for (std::size_t i = 0; i < n; ++i) {
        const double step = b.times[i + 1] - b.times[i];
        require(std::abs(step - dt) <= 1e-9 * dt, "euler_solve_bridge: grid must be uniform");
    }
    const BridgeQuadrature quad(hurst, dt);
    SolutionPath sol;
    sol.B_ref = b.lineage;
    sol.X = b;
    sol.X.kind = PathKind::X;
    sol.K = b;
    sol.K.kind = PathKind::K;
    std::fill(sol.K.values.begin(), sol.K.values.end(), 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        sol.X(0, c) = x0[c] + b(0, c);
    }
    std::vector<double> x(d), db(d), k(d), next(d), probe(d), val(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            x[c] = sol.X(i, c);
            db[c] = b(i + 1, c) - b(i, c);
            k[c] = 0.0;
        }
        for (std::size_t pass = 0; pass < passes; ++pass) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t q = 0; q < quad.size(); ++q) {
                for (std::size_t c = 0; c < d; ++c) {
                    probe[c] = x[c] + quad.theta(q) * k[c] + quad.mean(q) * db[c];
                }
                if (!field.evaluate_heat(quad.variance(q), probe.data(), val.data())) {
                    sol.box_exit = BoxExit{i, b.times[i]};
                    sol.X.times.resize(i + 1);
                    sol.X.values.resize((i + 1) * d);
                    sol.K.times.resize(i + 1);
                    sol.K.values.resize((i + 1) * d);
                    return sol;
                }
                for (std::size_t c = 0; c < d; ++c) {
                    next[c] += quad.weight(q) * val[c] * dt;
                }
            }
            k = next;
        }
        for (std::size_t c = 0; c < d; ++c) {
            sol.K(i + 1, c) = sol.K(i, c) + k[c];
            sol.X(i + 1, c) = x0[c] + sol.K(i + 1, c) + b(i + 1, c);
        }
    }
    return sol;
}

/// lambda(s, t) = |K_t - K_s| in the l1 norm; s and t are grid indices.
inline double random_control(const GridPath& k, std::size_t s, std::size_t t) {
    if (s > t) {
        throw PreconditionError("random_control: requires s <= t");
    }
    require(t < k.size(), "random_control: index beyond the path");
    double acc = 0.0;
    for (std::size_t c = 0; c < k.dimension; ++c) {
        acc += std::abs(k(t, c) - k(s, c));
    }
    return acc;
}

/// Every-other-point restriction of a path.
inline GridPath coarsen(const GridPath& path, std::size_t factor = 2) {
    require(factor >= 1 && path.steps() % factor == 0, "coarsen: grid size not divisible by the factor");
    GridPath out;
    out.dimension = path.dimension;
    out.kind = path.kind;
    out.hurst = path.hurst;
    out.lineage = path.lineage;
    for (std::size_t i = 0; i < path.size(); i += factor) {
        out.times.push_back(path.times[i]);
        for (std::size_t c = 0; c < path.dimension; ++c) {
            out.values.push_back(path(i, c));
        }
    }
    return out;
}

/// Sup over shared grid times of |X_fine - X_coarse| where the coarse solve
/// is driven by the noise restricted to every `factor`-th point.
inline double richardson_check(const SolveConfig& config, const GridPath& b, std::size_t factor = 2) {
    const SolutionPath fine = euler_solve(config, b);
    const SolutionPath coarse = euler_solve(config, coarsen(b, factor));
    const std::size_t shared = std::min(coarse.X.size(), (fine.X.size() - 1) / factor + 1);
    double worst = 0.0;
    for (std::size_t i = 0; i < shared; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < b.dimension; ++c) {
            acc += std::abs(fine.X(i * factor, c) - coarse.X(i, c));
        }
        worst = std::max(worst, acc);
    }
    return worst;
}

/// Drift quadrature nodes per step so that the predicted segment, of length
/// about dt^H, is resolved by ~1/6 of the drift width sqrt(eps). Plain Euler
/// point-samples a spike narrower than dt^H and misses its local time.
inline std::size_t plan_substeps(double hurst, double dt, double eps, std::size_t max_substeps = 256) {
    require(hurst > 0.0 && dt > 0.0 && eps > 0.0, "plan_substeps: arguments must be positive");
    const double s = std::ceil(6.0 * std::pow(dt, hurst) / std::sqrt(eps));
    return static_cast<std::size_t>(std::clamp(s, 1.0, static_cast<double>(max_substeps)));
}

struct StepPlan {
    std::size_t n_steps = 0;
    double proxy = 0.0;  ///< worst Richardson proxy over the pilot paths
    double scale = 0.0;  ///< worst sup|X| over the pilot paths
    bool converged = false;
};

/// Doubles n_steps from base.n_steps until the Richardson proxy drops below
/// rel_tol * sup|X| on every pilot path, or max_steps is reached.
inline StepPlan plan_n_steps(const SolveConfig& config, FbmConfig base, std::uint64_t master_seed,
                             std::size_t pilot_paths, double rel_tol, std::size_t max_steps) {
    StepPlan plan;
    for (std::size_t n = base.n_steps; n <= max_steps; n *= 2) {
        base.n_steps = n;
        FbmSampler sampler(base);
        double worst_ratio = 0.0;
        plan = StepPlan{n, 0.0, 0.0, false};
        for (std::size_t p = 0; p < pilot_paths; ++p) {
            const GridPath b = sampler.sample({master_seed, p});
            const double proxy = richardson_check(config, b);
            const SolutionPath sol = euler_solve(config, b);
            double sup = 0.0;
            for (std::size_t i = 0; i < sol.X.size(); ++i) {
                double acc = 0.0;
                for (std::size_t c = 0; c < b.dimension; ++c) {
                    acc += std::abs(sol.X(i, c));
                }
                sup = std::max(sup, acc);
            }
            plan.proxy = std::max(plan.proxy, proxy);
            plan.scale = std::max(plan.scale, sup);
            worst_ratio = std::max(worst_ratio, sup > 0.0 ? proxy / sup : proxy);
        }
        if (worst_ratio < rel_tol) {
            plan.converged = true;
            return plan;
        }
    }
    return plan;
}

} // namespace fbmlab
