#pragma once

// Drift descriptions and their mollifications b^eps = G_eps b.

#include "fbmlab/besov.hpp"
#include "fbmlab/errors.hpp"
#include "fbmlab/fft.hpp"
#include "fbmlab/lattice.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace fbmlab {

struct Atom {
    std::vector<double> location;
    std::vector<double> weight;
};

struct AtomicMeasure {
    std::vector<Atom> atoms;
};

/// A bounded smooth drift given pointwise; `name` identifies it in configs.
struct SmoothFunction {
    std::string name;
    std::function<void(std::span<const double>, std::span<double>)> function;
};

struct DriftSpec {
    std::variant<SmoothFunction, AtomicMeasure> variant;
    std::size_t dimension = 1;
    double declared_beta = 0.0;
    bool nonnegative = true;

    bool atomic() const { return std::holds_alternative<AtomicMeasure>(variant); }
    const AtomicMeasure& measure() const { return std::get<AtomicMeasure>(variant); }
    const SmoothFunction& smooth() const { return std::get<SmoothFunction>(variant); }

    /// Single atom of the given weight at the origin; beta defaults to -d.
    static DriftSpec dirac(std::size_t d, std::vector<double> weight, std::vector<double> location = {}) {
        if (location.empty()) {
            location.assign(d, 0.0);
        }
        return atoms(d, {Atom{std::move(location), std::move(weight)}});
    }

    static DriftSpec atoms(std::size_t d, std::vector<Atom> list) {
        DriftSpec s;
        s.dimension = d;
        s.declared_beta = -static_cast<double>(d);
        s.nonnegative = true;
        for (const auto& a : list) {
            for (double w : a.weight) {
                s.nonnegative = s.nonnegative && w >= 0.0;
            }
        }
        s.variant = AtomicMeasure{std::move(list)};
        s.validate();
        return s;
    }

    static DriftSpec constant(std::vector<double> value) {
        DriftSpec s;
        s.dimension = value.size();
        s.declared_beta = 0.0;
        s.nonnegative = true;
        for (double v : value) {
            s.nonnegative = s.nonnegative && v >= 0.0;
        }
        s.variant = SmoothFunction{"constant", [value](std::span<const double>, std::span<double> out) {
                                       for (std::size_t c = 0; c < out.size(); ++c) {
                                           out[c] = value[c];
                                       }
                                   }};
        return s;
    }

    static DriftSpec smooth_function(std::size_t d, std::string name,
                                     std::function<void(std::span<const double>, std::span<double>)> f,
                                     bool nonnegative, double beta = 1.0) {
        DriftSpec s;
        s.dimension = d;
        s.declared_beta = beta;
        s.nonnegative = nonnegative;
        s.variant = SmoothFunction{std::move(name), std::move(f)};
        return s;
    }

    std::vector<double> total_weight() const {
        std::vector<double> total(dimension, 0.0);
        if (atomic()) {
            for (const auto& a : measure().atoms) {
                for (std::size_t c = 0; c < dimension; ++c) {
                    total[c] += a.weight[c];
                }
            }
        }
        return total;
    }

    void validate() const {
        if (atomic()) {
            for (const auto& a : measure().atoms) {
                if (a.location.size() != dimension || a.weight.size() != dimension) {
                    throw ConfigError("atom location/weight must have the drift dimension");
                }
                if (nonnegative) {
                    for (double w : a.weight) {
                        if (w < 0.0) {
                            throw ConfigError("nonnegative drift has a negative atom weight");
                        }
                    }
                }
            }
        }
    }
};

/// Hypothesis gate beta > -1/(2H); the regularization estimates are vacuous otherwise.
inline void check_drift_regularity(double beta, double hurst) {
    if (beta > -1.0 / (2.0 * hurst)) {
        return;
    }
    std::ostringstream msg;
    msg << "drift regularity gate beta > -1/(2H) violated: beta=" << beta << " requires H<";
    const double twice = 2.0 * std::abs(beta);
    if (std::abs(twice - std::round(twice)) < 1e-12) {
        msg << "1/" << static_cast<long>(std::round(twice));
    } else {
        msg << 1.0 / twice;
    }
    msg << ", got H=" << hurst;
    throw ConfigError(msg.str());
}

/// g_t(x) = (2 pi t)^{-d/2} exp(-|x|^2 / (2t)) with the Euclidean |x|.
inline double gaussian_kernel(double t, std::span<const double> x) {
    if (!(t > 0.0)) {
        throw std::domain_error("gaussian_kernel: t must be positive");
    }
    double r2 = 0.0;
    for (double v : x) {
        r2 += v * v;
    }
    const double d = static_cast<double>(x.size());
    return std::pow(2.0 * M_PI * t, -0.5 * d) * std::exp(-r2 / (2.0 * t));
}

enum class MollifierKernel { GaussianHeat, CompactBump };

inline const char* to_string(MollifierKernel k) {
    return k == MollifierKernel::GaussianHeat ? "gaussian" : "bump";
}

inline MollifierKernel mollifier_from_string(const std::string& s) {
    if (s == "gaussian" || s == "GaussianHeat") return MollifierKernel::GaussianHeat;
    if (s == "bump" || s == "CompactBump") return MollifierKernel::CompactBump;
    throw ConfigError("unknown mollifier kernel '" + s + "'");
}

/// Smooth compactly supported bump of radius 3 sqrt(eps), unit mass.
class CompactBump {
public:
    static constexpr double radius_factor = 3.0;

    static double profile(double rho) { return rho < 1.0 ? std::exp(-1.0 / (1.0 - rho * rho)) : 0.0; }

    /// Integral of profile(|y|) over the unit ball of R^d.
    static double unit_mass(std::size_t d) {
        auto radial = [d](double r) { return profile(r) * std::pow(r, static_cast<double>(d) - 1.0); };
        const double integral = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(radial, 0.0, 1.0, 10, 1e-14);
        switch (d) {
        case 1: return 2.0 * integral;
        case 2: return 2.0 * M_PI * integral;
        case 3: return 4.0 * M_PI * integral;
        default: throw ConfigError("CompactBump: dimension must be 1, 2 or 3");
        }
    }

    static double value(double eps, std::span<const double> x, double mass) {
        const double r = radius_factor * std::sqrt(eps);
        double r2 = 0.0;
        for (double v : x) {
            r2 += v * v;
        }
        const double d = static_cast<double>(x.size());
        return profile(std::sqrt(r2) / r) / (mass * std::pow(r, d));
    }
};

namespace detail {

inline void check_atoms_inside(const AtomicMeasure& m, const SpatialLattice& lattice) {
    for (const auto& a : m.atoms) {
        if (!lattice.contains(a.location)) {
            throw ConfigError("atom lies outside the lattice box; enlarge the half-width");
        }
    }
}

/// Multiplies every component's spectrum by multiplier(|xi|^2, flat index).
template <class Multiplier>
GridFunction spectral_filter(const GridFunction& f, Multiplier&& multiplier) {
    const auto& lat = f.lattice;
    const std::size_t n = lat.size();
    const auto extents = lat.extents();
    std::vector<double> factor(n);
    std::vector<std::size_t> index(lat.dimension);
    for (std::size_t flat = 0; flat < n; ++flat) {
        lat.unflatten(flat, index.data());
        double r2 = 0.0;
        for (std::size_t a = 0; a < lat.dimension; ++a) {
            const double xi = lat.frequency(index[a]);
            r2 += xi * xi;
        }
        factor[flat] = multiplier(r2, flat);
    }
    GridFunction out(lat, f.components);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t c = 0; c < f.components; ++c) {
        ComplexBuffer buf(n);
        const auto src = f.component(c);
        for (std::size_t i = 0; i < n; ++i) {
            buf.set(i, src[i], 0.0);
        }
        fft_inplace(buf, extents, true);
        for (std::size_t i = 0; i < n; ++i) {
            buf.set(i, buf.re(i) * factor[i], buf.im(i) * factor[i]);
        }
        fft_inplace(buf, extents, false);
        auto dst = out.component(c);
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = buf.re(i) * inv_n;
        }
    }
    return out;
}

} // namespace detail

/// G_t f on the periodic lattice via the heat multiplier exp(-t |xi|^2 / 2).
inline GridFunction heat_smooth(const GridFunction& f, double t) {
    if (!(t > 0.0)) {
        throw std::domain_error("heat_smooth: t must be positive");
    }
    return detail::spectral_filter(f, [t](double r2, std::size_t) { return std::exp(-0.5 * t * r2); });
}

/// Periodic convolution with the compact bump at scale eps.
inline GridFunction bump_smooth(const GridFunction& f, double eps) {
    const auto& lat = f.lattice;
    const double mass = CompactBump::unit_mass(lat.dimension);
    GridFunction kernel(lat, 1);
    const std::size_t n = lat.size();
    std::vector<std::size_t> index(lat.dimension);
    std::vector<double> x(lat.dimension);
    for (std::size_t flat = 0; flat < n; ++flat) {
        lat.unflatten(flat, index.data());
        for (std::size_t a = 0; a < lat.dimension; ++a) {
            // distance to the origin on the periodic box, origin at index N/2
            const long k = static_cast<long>(index[a]);
            const long np = static_cast<long>(lat.points);
            const long wrapped = k < np / 2 ? k : k - np;
            x[a] = static_cast<double>(wrapped) * lat.spacing();
        }
        kernel.values[flat] = CompactBump::value(eps, x, mass);
    }
    // unit discrete mass, so constants are fixed exactly
    const double total = std::accumulate(kernel.values.begin(), kernel.values.end(), 0.0);
    if (!(total > 0.0)) {
        throw ConfigError("bump_smooth: bump radius below the lattice spacing");
    }
    for (double& v : kernel.values) {
        v /= total;
    }
    ComplexBuffer kspec(n);
    for (std::size_t i = 0; i < n; ++i) {
        kspec.set(i, kernel.values[i], 0.0);
    }
    const auto extents = lat.extents();
    fft_inplace(kspec, extents, true);
    // kernel is even, so its spectrum is real up to roundoff
    return detail::spectral_filter(f, [&kspec](double, std::size_t flat) { return kspec.re(flat); });
}

/// b^eps = G_eps b (or the bump convolution) sampled on the lattice. Atomic
/// measures are summed exactly; smooth functions are filtered spectrally.
inline GridFunction mollify(const DriftSpec& spec, double eps, const SpatialLattice& lattice,
                            MollifierKernel kernel = MollifierKernel::GaussianHeat) {
    if (!(eps > 0.0)) {
        throw std::domain_error("mollify: epsilon must be positive");
    }
    lattice.validate();
    if (lattice.dimension != spec.dimension) {
        throw ConfigError("mollify: lattice and drift dimensions differ");
    }
    const std::size_t d = spec.dimension;
    if (spec.atomic()) {
        const auto& m = spec.measure();
        detail::check_atoms_inside(m, lattice);
        const double mass = kernel == MollifierKernel::CompactBump ? CompactBump::unit_mass(d) : 1.0;
        std::vector<double> shifted(d);
        return GridFunction::sample(lattice, d, [&](std::span<const double> x, std::span<double> out) {
            std::fill(out.begin(), out.end(), 0.0);
            for (const auto& atom : m.atoms) {
                for (std::size_t a = 0; a < d; ++a) {
                    shifted[a] = x[a] - atom.location[a];
                }
                const double k = kernel == MollifierKernel::GaussianHeat ? gaussian_kernel(eps, shifted)
                                                                          : CompactBump::value(eps, shifted, mass);
                for (std::size_t c = 0; c < d; ++c) {
                    out[c] += atom.weight[c] * k;
                }
            }
        });
    }
    const GridFunction sampled = GridFunction::sample(lattice, d, spec.smooth().function);
    return kernel == MollifierKernel::GaussianHeat ? heat_smooth(sampled, eps) : bump_smooth(sampled, eps);
}

/// Decreasing positive scales eps_1 > eps_2 > ... for one kernel family.
struct MollifierSchedule {
    MollifierKernel kernel = MollifierKernel::GaussianHeat;
    std::vector<double> scales;

    /// eps_n = base^{-n} for n = first..last.
    static MollifierSchedule geometric(double base, int first, int last,
                                       MollifierKernel kernel = MollifierKernel::GaussianHeat) {
        MollifierSchedule s;
        s.kernel = kernel;
        for (int n = first; n <= last; ++n) {
            s.scales.push_back(std::pow(base, -static_cast<double>(n)));
        }
        s.validate();
        return s;
    }

    void validate() const {
        if (scales.empty()) {
            throw ConfigError("mollifier schedule is empty");
        }
        for (std::size_t k = 0; k < scales.size(); ++k) {
            if (!(scales[k] > 0.0)) {
                throw ConfigError("mollifier scales must be positive");
            }
            if (k > 0 && !(scales[k] < scales[k - 1])) {
                throw ConfigError("mollifier scales must be strictly decreasing");
            }
        }
    }
};

inline std::vector<GridFunction> build_approximating_sequence(const DriftSpec& spec, const MollifierSchedule& schedule,
                                                              const SpatialLattice& lattice) {
    schedule.validate();
    std::vector<GridFunction> seq;
    seq.reserve(schedule.scales.size());
    for (double eps : schedule.scales) {
        seq.push_back(mollify(spec, eps, lattice, schedule.kernel));
    }
    return seq;
}

/// A mollified drift that can be evaluated anywhere and pushed further along
/// the heat semigroup. Atomic Gaussian mollifications stay in closed form,
/// since G_t G_eps mu = G_{eps+t} mu; everything else lives on the lattice.
class SmoothedDrift {
public:
    SmoothedDrift(std::shared_ptr<const DriftSpec> spec, double eps, const SpatialLattice& lattice,
                  MollifierKernel kernel = MollifierKernel::GaussianHeat)
        : spec_(std::move(spec)), eps_(eps), kernel_(kernel),
          grid_(std::make_shared<GridFunction>(mollify(*spec_, eps, lattice, kernel))) {}

    const GridFunction& grid() const { return *grid_; }
    std::size_t dimension() const { return spec_->dimension; }
    double scale() const { return eps_; }
    bool closed_form() const { return spec_->atomic() && kernel_ == MollifierKernel::GaussianHeat; }

    /// false when x leaves the lattice box.
    bool evaluate(const double* x, double* out) const {
        if (!closed_form()) {
            return grid_->evaluate(x, out);
        }
        return closed_form_sum(eps_, x, out);
    }

    /// (G_t b^eps)(x) for t >= 0. Closed form for atomic Gaussian drifts;
    /// otherwise the lattice heat flow, memoized per t.
    bool evaluate_heat(double t, const double* x, double* out) const {
        if (t == 0.0) {
            return evaluate(x, out);
        }
        if (closed_form()) {
            return closed_form_sum(eps_ + t, x, out);
        }
        std::shared_ptr<const GridFunction> g;
        {
            std::lock_guard lock(cache_->mutex);
            auto& slot = cache_->grids[t];
            if (!slot) {
                slot = std::make_shared<GridFunction>(heat_smooth(*grid_, t));
            }
            g = slot;
        }
        return g->evaluate(x, out);
    }

    /// G_t applied to this drift.
    SmoothedDrift heat(double t) const {
        if (closed_form()) {
            return SmoothedDrift(spec_, eps_ + t, grid_->lattice, kernel_);
        }
        SmoothedDrift out = *this;
        out.grid_ = std::make_shared<GridFunction>(heat_smooth(*grid_, t));
        out.eps_ = eps_ + t;
        out.cache_ = std::make_shared<HeatCache>();
        return out;
    }

    const DriftSpec& spec() const { return *spec_; }
    MollifierKernel kernel() const { return kernel_; }

private:
    struct HeatCache {
        std::mutex mutex;
        std::map<double, std::shared_ptr<const GridFunction>> grids;
    };

    bool closed_form_sum(double scale, const double* x, double* out) const {
        const std::size_t d = spec_->dimension;
        if (!grid_->lattice.contains(std::span<const double>(x, d))) {
            return false;
        }
        for (std::size_t c = 0; c < d; ++c) {
            out[c] = 0.0;
        }
        const double root = 1.0 / std::sqrt(2.0 * M_PI * scale);
        double norm = root;
        for (std::size_t a = 1; a < d; ++a) {
            norm *= root;
        }
        const double inv2t = 0.5 / scale;
        for (const auto& atom : spec_->measure().atoms) {
            double r2 = 0.0;
            for (std::size_t a = 0; a < d; ++a) {
                const double v = x[a] - atom.location[a];
                r2 += v * v;
            }
            const double k = norm * std::exp(-r2 * inv2t);
            for (std::size_t c = 0; c < d; ++c) {
                out[c] += atom.weight[c] * k;
            }
        }
        return true;
    }

    std::shared_ptr<const DriftSpec> spec_;
    double eps_;
    MollifierKernel kernel_;
    std::shared_ptr<GridFunction> grid_;
    std::shared_ptr<HeatCache> cache_ = std::make_shared<HeatCache>();
};

} // namespace fbmlab
