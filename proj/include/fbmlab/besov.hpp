#pragma once

// Littlewood-Paley analysis on a periodic lattice: the dyadic partition of
// unity, blocks, nonhomogeneous Besov norms (sup over blocks), C^1 norms and
// the "bounded in B^beta, convergent in every weaker B^beta'" check.

#include "fbmlab/errors.hpp"
#include "fbmlab/fft.hpp"
#include "fbmlab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fbmlab {

/// Radial symbols chi and rho_j = rho(2^-j .), with rho(xi) = theta(xi/2) - theta(xi)
/// and chi = theta, where theta = 1 on |xi| <= 3/4 and 0 on |xi| >= 4/3.
/// Hence supp chi in B(0, 4/3) and supp rho in {3/4 <= |xi| <= 8/3}.
class DyadicDecomposition {
public:
    static constexpr double inner = 3.0 / 4.0;
    static constexpr double outer = 4.0 / 3.0;

    DyadicDecomposition() = default;
    DyadicDecomposition(int j_max, double max_frequency) : j_max_(j_max), max_frequency_(max_frequency) {}

    int j_max() const { return j_max_; }
    /// Largest lattice frequency modulus; chi + sum_{j<=j_max} rho_j = 1 up to here.
    double max_frequency() const { return max_frequency_; }

    static double theta(double r) {
        if (r <= inner) {
            return 1.0;
        }
        if (r >= outer) {
            return 0.0;
        }
        const double x = (outer - r) / (outer - inner);
        const double a = std::exp(-1.0 / x);
        const double b = std::exp(-1.0 / (1.0 - x));
        return a / (a + b);
    }

    double chi(double r) const { return theta(r); }
    double rho(int j, double r) const {
        const double s = std::ldexp(r, -j);
        return theta(0.5 * s) - theta(s);
    }
    /// Symbol of block j: chi for j = -1, rho_j for j >= 0, zero otherwise.
    double symbol(int j, double r) const {
        if (j <= -2 || j > j_max_) {
            return 0.0;
        }
        return j == -1 ? chi(r) : rho(j, r);
    }

private:
    int j_max_ = 0;
    double max_frequency_ = 0.0;
};

inline DyadicDecomposition build_partition(const SpatialLattice& lattice) {
    lattice.validate();
    const double corner = std::sqrt(static_cast<double>(lattice.dimension)) * lattice.nyquist();
    int j = -1;
    while (std::ldexp(DyadicDecomposition::inner, j + 1) < corner) {
        ++j;
    }
    if (j < 3) {
        throw ConfigError("lattice too coarse: only " + std::to_string(j + 1) +
                          " dyadic annuli resolved, need j_max >= 3");
    }
    return {j, corner};
}

namespace detail {

inline double pointwise_l1(const GridFunction& f, std::size_t flat) {
    const std::size_t n = f.lattice.size();
    double acc = 0.0;
    for (std::size_t c = 0; c < f.components; ++c) {
        acc += std::abs(f.values[c * n + flat]);
    }
    return acc;
}

} // namespace detail

/// Lattice L^p norm of |f(x)| (l1 over components): max for p = inf, Riemann sum otherwise.
inline double lattice_lp_norm(const GridFunction& f, double p) {
    const std::size_t n = f.lattice.size();
    if (std::isinf(p)) {
        double m = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            m = std::max(m, detail::pointwise_l1(f, i));
        }
        return m;
    }
    require(p >= 1.0, "lattice_lp_norm: p must be >= 1");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += std::pow(detail::pointwise_l1(f, i), p);
    }
    return std::pow(acc * f.lattice.cell_volume(), 1.0 / p);
}

/// Caches the spectrum of f so that many blocks can be extracted cheaply.
class LittlewoodPaley {
public:
    explicit LittlewoodPaley(const GridFunction& f)
        : lattice_(f.lattice), components_(f.components), partition_(build_partition(f.lattice)) {
        const std::size_t n = lattice_.size();
        const auto extents = lattice_.extents();
        radius_.resize(n);
        std::vector<std::size_t> index(lattice_.dimension);
        for (std::size_t flat = 0; flat < n; ++flat) {
            lattice_.unflatten(flat, index.data());
            double r2 = 0.0;
            for (std::size_t a = 0; a < lattice_.dimension; ++a) {
                const double xi = lattice_.frequency(index[a]);
                r2 += xi * xi;
            }
            radius_[flat] = std::sqrt(r2);
        }
        spectra_.reserve(components_);
        for (std::size_t c = 0; c < components_; ++c) {
            ComplexBuffer buf(n);
            const auto comp = f.component(c);
            for (std::size_t i = 0; i < n; ++i) {
                buf.set(i, comp[i], 0.0);
            }
            fft_inplace(buf, extents, true);
            spectra_.push_back(std::move(buf));
        }
    }

    const DyadicDecomposition& partition() const { return partition_; }
    const SpatialLattice& lattice() const { return lattice_; }

    GridFunction block(int j) const {
        GridFunction out(lattice_, components_);
        if (j <= -2 || j > partition_.j_max()) {
            return out;
        }
        const std::size_t n = lattice_.size();
        const auto extents = lattice_.extents();
        std::vector<double> symbol(n);
        for (std::size_t i = 0; i < n; ++i) {
            symbol[i] = partition_.symbol(j, radius_[i]);
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < components_; ++c) {
            ComplexBuffer buf(n);
            const auto& spec = spectra_[c];
            for (std::size_t i = 0; i < n; ++i) {
                buf.set(i, symbol[i] * spec.re(i), symbol[i] * spec.im(i));
            }
            fft_inplace(buf, extents, false);
            auto dst = out.component(c);
            for (std::size_t i = 0; i < n; ++i) {
                dst[i] = buf.re(i) * inv_n;
            }
        }
        return out;
    }

    /// ||Delta_j f||_{L^p} for j = -1..j_max.
    std::vector<double> block_norms(double p) const {
        std::vector<double> norms;
        for (int j = -1; j <= partition_.j_max(); ++j) {
            norms.push_back(lattice_lp_norm(block(j), p));
        }
        return norms;
    }

    double besov_norm(double s, double p) const { return besov_from_block_norms(block_norms(p), s); }

    /// norms[k] is the block norm at j = k - 1. The low-pass block gets weight
    /// 1 rather than 2^{-s}: an equivalent norm that is monotone in s.
    static double besov_from_block_norms(const std::vector<double>& norms, double s) {
        double best = 0.0;
        for (std::size_t k = 0; k < norms.size(); ++k) {
            const int j = std::max(static_cast<int>(k) - 1, 0);
            best = std::max(best, std::exp2(static_cast<double>(j) * s) * norms[k]);
        }
        return best;
    }

    /// Spectral partial derivative of every component along `axis`.
    GridFunction derivative(std::size_t axis) const {
        GridFunction out(lattice_, components_);
        const std::size_t n = lattice_.size();
        const auto extents = lattice_.extents();
        std::vector<std::size_t> index(lattice_.dimension);
        std::vector<double> xi(n);
        for (std::size_t flat = 0; flat < n; ++flat) {
            lattice_.unflatten(flat, index.data());
            const std::size_t k = index[axis];
            xi[flat] = (k == lattice_.points / 2) ? 0.0 : lattice_.frequency(k);
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t c = 0; c < components_; ++c) {
            ComplexBuffer buf(n);
            const auto& spec = spectra_[c];
            for (std::size_t i = 0; i < n; ++i) {
                // i * xi * (re + i im) = -xi im + i xi re
                buf.set(i, -xi[i] * spec.im(i), xi[i] * spec.re(i));
            }
            fft_inplace(buf, extents, false);
            auto dst = out.component(c);
            for (std::size_t i = 0; i < n; ++i) {
                dst[i] = buf.re(i) * inv_n;
            }
        }
        return out;
    }

private:
    SpatialLattice lattice_;
    std::size_t components_;
    DyadicDecomposition partition_;
    std::vector<double> radius_;
    std::vector<ComplexBuffer> spectra_;
};

inline GridFunction lp_block(const GridFunction& f, int j) {
    if (j <= -2) {
        f.lattice.validate();
        return GridFunction(f.lattice, f.components);
    }
    return LittlewoodPaley(f).block(j);
}

/// sup_j 2^{max(j,0) s} ||Delta_j f||_{L^p}.
inline double besov_norm(const GridFunction& f, double s, double p) {
    return LittlewoodPaley(f).besov_norm(s, p);
}

/// sup|f| + sup|grad f| with the gradient taken spectrally; vector and matrix
/// entries are combined with the l1 norm.
inline double c1_norm(const GridFunction& f) {
    LittlewoodPaley lp(f);
    const std::size_t n = f.lattice.size();
    std::vector<double> grad(n, 0.0);
    for (std::size_t a = 0; a < f.lattice.dimension; ++a) {
        const GridFunction da = lp.derivative(a);
        for (std::size_t i = 0; i < n; ++i) {
            grad[i] += detail::pointwise_l1(da, i);
        }
    }
    return lattice_lp_norm(f, std::numeric_limits<double>::infinity()) +
           *std::max_element(grad.begin(), grad.end());
}

struct BetaMinusProbe {
    double beta_prime = 0.0;
    std::vector<double> distances;
    bool nonincreasing = false;
    bool contracted = false;
};

struct BetaMinusReport {
    double beta = 0.0;
    std::vector<double> norms;   ///< ||f_n||_{B^beta_inf}
    double sup_norm = 0.0;
    double bound_ratio = 0.0;    ///< max/min of norms across the family
    bool bounded = false;
    std::vector<BetaMinusProbe> probes;
    bool passes = false;
};

struct BetaMinusOptions {
    std::vector<double> probe_offsets{0.1, 0.25, 0.5};
    double max_bound_ratio = 4.0;   ///< boundedness: max/min norm across n
    double contraction = 0.95;      ///< last distance must be <= contraction * first
    double monotone_slack = 0.05;   ///< relative slack for the nonincreasing check
    double zero_tolerance = 1e-12;  ///< distances below this (relative to sup norm) count as zero
};

/// Bounded in B^beta_inf across the family, and for each probe beta' < beta
/// the distances ||f_n - f||_{B^beta'_inf} decrease along the family.
inline BetaMinusReport check_beta_minus(const std::vector<GridFunction>& family, const GridFunction& limit,
                                        double beta, const BetaMinusOptions& options = {}) {
    require(!family.empty(), "check_beta_minus: empty family");
    for (const auto& f : family) {
        require(f.lattice == limit.lattice && f.components == limit.components,
                "check_beta_minus: all functions must share one lattice");
    }
    constexpr double inf = std::numeric_limits<double>::infinity();
    BetaMinusReport report;
    report.beta = beta;
    std::vector<std::vector<double>> diff_blocks;
    for (const auto& f : family) {
        report.norms.push_back(besov_norm(f, beta, inf));
        diff_blocks.push_back(LittlewoodPaley(f - limit).block_norms(inf));
    }
    report.sup_norm = *std::max_element(report.norms.begin(), report.norms.end());
    const double lo = *std::min_element(report.norms.begin(), report.norms.end());
    report.bound_ratio = lo > 0.0 ? report.sup_norm / lo : (report.sup_norm > 0.0 ? inf : 1.0);
    report.bounded = std::isfinite(report.sup_norm) && report.bound_ratio <= options.max_bound_ratio;

    bool all_converge = true;
    const double zero = options.zero_tolerance * std::max(report.sup_norm, 1.0);
    for (double offset : options.probe_offsets) {
        BetaMinusProbe probe;
        probe.beta_prime = beta - offset;
        for (const auto& blocks : diff_blocks) {
            probe.distances.push_back(LittlewoodPaley::besov_from_block_norms(blocks, probe.beta_prime));
        }
        const double first = probe.distances.front();
        const double last = probe.distances.back();
        probe.nonincreasing = true;
        for (std::size_t k = 1; k < probe.distances.size(); ++k) {
            if (probe.distances[k] > probe.distances[k - 1] * (1.0 + options.monotone_slack) + zero) {
                probe.nonincreasing = false;
            }
        }
        probe.contracted = last <= zero || last <= options.contraction * first;
        all_converge = all_converge && probe.nonincreasing && probe.contracted;
        report.probes.push_back(std::move(probe));
    }
    report.passes = report.bounded && all_converge;
    return report;
}

} // namespace fbmlab
