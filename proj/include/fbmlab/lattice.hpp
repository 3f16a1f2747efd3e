#pragma once

#include "fbmlab/errors.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fbmlab {

/// Periodic box [-L, L)^d with `points` samples per axis.
struct SpatialLattice {
    std::size_t dimension = 1;
    double half_width = 1.0;
    std::size_t points = 64;

    double spacing() const { return 2.0 * half_width / static_cast<double>(points); }
    double cell_volume() const { return std::pow(spacing(), static_cast<double>(dimension)); }
    std::size_t size() const {
        std::size_t n = 1;
        for (std::size_t a = 0; a < dimension; ++a) {
            n *= points;
        }
        return n;
    }
    double coordinate(std::size_t k) const { return -half_width + static_cast<double>(k) * spacing(); }

    /// Angular frequency of DFT index k along one axis.
    double frequency(std::size_t k) const {
        const auto n = static_cast<long>(points);
        const long signed_k = static_cast<long>(k) < n / 2 ? static_cast<long>(k) : static_cast<long>(k) - n;
        return static_cast<double>(signed_k) * M_PI / half_width;
    }
    double nyquist() const { return M_PI / spacing(); }

    std::vector<std::size_t> extents() const { return std::vector<std::size_t>(dimension, points); }

    /// Multi-index of a flat (row-major) index.
    void unflatten(std::size_t flat, std::size_t* index) const {
        for (std::size_t a = dimension; a-- > 0;) {
            index[a] = flat % points;
            flat /= points;
        }
    }

    void validate() const {
        if (dimension < 1 || dimension > 3) {
            throw ConfigError("lattice dimension must be 1, 2 or 3");
        }
        if (!(half_width > 0.0)) {
            throw ConfigError("lattice half-width must be positive");
        }
        if (points < 64 || (points & (points - 1)) != 0) {
            throw ConfigError("lattice points per axis must be a power of two >= 64, got " +
                              std::to_string(points));
        }
    }

    bool contains(std::span<const double> x) const {
        const double hi = half_width - spacing();
        for (double v : x) {
            if (!(v >= -half_width && v <= hi)) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const SpatialLattice&, const SpatialLattice&) = default;
};

enum class Interpolation { Nearest, Multilinear };

/// Lattice samples of an R^components-valued function. Component-major:
/// values[c * lattice.size() + flat_index].
struct GridFunction {
    SpatialLattice lattice;
    std::size_t components = 1;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(const SpatialLattice& l, std::size_t comps, double fill = 0.0)
        : lattice(l), components(comps), values(l.size() * comps, fill) {}

    std::span<double> component(std::size_t c) { return {values.data() + c * lattice.size(), lattice.size()}; }
    std::span<const double> component(std::size_t c) const {
        return {values.data() + c * lattice.size(), lattice.size()};
    }

    /// Fills every point from f(x, out) with x of length d and out of length components.
    template <class F>
    static GridFunction sample(const SpatialLattice& lattice, std::size_t components, F&& f) {
        GridFunction g(lattice, components);
        const std::size_t n = lattice.size();
        std::vector<std::size_t> index(lattice.dimension);
        std::vector<double> x(lattice.dimension);
        std::vector<double> out(components);
        for (std::size_t flat = 0; flat < n; ++flat) {
            lattice.unflatten(flat, index.data());
            for (std::size_t a = 0; a < lattice.dimension; ++a) {
                x[a] = lattice.coordinate(index[a]);
            }
            f(std::span<const double>(x), std::span<double>(out));
            for (std::size_t c = 0; c < components; ++c) {
                g.values[c * n + flat] = out[c];
            }
        }
        return g;
    }

    /// Evaluates at x (length d) into out (length components); false if x lies
    /// outside the interpolation box [-L, L - h]^d.
    bool evaluate(const double* x, double* out, Interpolation mode = Interpolation::Multilinear) const {
        const std::size_t d = lattice.dimension;
        const std::size_t n = lattice.size();
        const double h = lattice.spacing();
        const double upper = static_cast<double>(lattice.points - 1);
        std::size_t base[3];
        double frac[3];
        for (std::size_t a = 0; a < d; ++a) {
            const double u = (x[a] + lattice.half_width) / h;
            if (!(u >= 0.0 && u <= upper)) {
                return false;
            }
            double fl = std::floor(u);
            if (fl >= upper) {
                fl = upper - 1.0;
            }
            base[a] = static_cast<std::size_t>(fl);
            frac[a] = u - fl;
        }
        if (mode == Interpolation::Nearest) {
            std::size_t flat = 0;
            for (std::size_t a = 0; a < d; ++a) {
                flat = flat * lattice.points + base[a] + (frac[a] >= 0.5 ? 1 : 0);
            }
            for (std::size_t c = 0; c < components; ++c) {
                out[c] = values[c * n + flat];
            }
            return true;
        }
        for (std::size_t c = 0; c < components; ++c) {
            out[c] = 0.0;
        }
        const std::size_t corners = std::size_t{1} << d;
        for (std::size_t mask = 0; mask < corners; ++mask) {
            double w = 1.0;
            std::size_t flat = 0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool up = (mask >> (d - 1 - a)) & 1u;
                w *= up ? frac[a] : 1.0 - frac[a];
                flat = flat * lattice.points + base[a] + (up ? 1 : 0);
            }
            if (w == 0.0) {
                continue;
            }
            for (std::size_t c = 0; c < components; ++c) {
                out[c] += w * values[c * n + flat];
            }
        }
        return true;
    }

    /// Riemann-sum integral of one component over the box.
    double integral(std::size_t c) const {
        double acc = 0.0;
        for (double v : component(c)) {
            acc += v;
        }
        return acc * lattice.cell_volume();
    }

    GridFunction& operator-=(const GridFunction& other) {
        require(other.lattice == lattice && other.components == components, "GridFunction: lattice mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] -= other.values[i];
        }
        return *this;
    }
    GridFunction& operator*=(double s) {
        for (double& v : values) {
            v *= s;
        }
        return *this;
    }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(GridFunction a, double s) { return a *= s; }
};

/// Periodic shift by whole lattice cells: result(x) = f(x + offset * h).
inline GridFunction lattice_shift(const GridFunction& f, std::span<const long> offset) {
    const auto& lat = f.lattice;
    require(offset.size() == lat.dimension, "lattice_shift: offset dimension mismatch");
    GridFunction out(lat, f.components);
    const std::size_t n = lat.size();
    const auto np = static_cast<long>(lat.points);
    std::vector<std::size_t> index(lat.dimension);
    for (std::size_t flat = 0; flat < n; ++flat) {
        lat.unflatten(flat, index.data());
        std::size_t src = 0;
        for (std::size_t a = 0; a < lat.dimension; ++a) {
            const long k = ((static_cast<long>(index[a]) + offset[a]) % np + np) % np;
            src = src * lat.points + static_cast<std::size_t>(k);
        }
        for (std::size_t c = 0; c < f.components; ++c) {
            out.values[c * n + flat] = f.values[c * n + src];
        }
    }
    return out;
}

} // namespace fbmlab
