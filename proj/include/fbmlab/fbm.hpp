#pragma once

// Fractional Brownian motion on a uniform grid: exact samplers, the discrete
// Brownian <-> fractional operator pair, and conditional laws.

#include "fbmlab/errors.hpp"
#include "fbmlab/fft.hpp"
#include "fbmlab/rng.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fbmlab {

struct FbmConfig {
    double hurst = 0.5;
    double horizon = 1.0;
    std::size_t n_steps = 1024;
    std::size_t dimension = 1;

    double dt() const { return horizon / static_cast<double>(n_steps); }
    double time(std::size_t i) const { return horizon * static_cast<double>(i) / static_cast<double>(n_steps); }
    bool brownian() const { return hurst == 0.5; }

    void validate() const {
        if (!(hurst > 0.0 && hurst <= 0.5)) {
            throw ConfigError("hurst must lie in (0, 1/2], got " + std::to_string(hurst));
        }
        if (!(horizon > 0.0)) {
            throw ConfigError("horizon must be positive");
        }
        if (n_steps < 2) {
            throw ConfigError("n_steps must be at least 2");
        }
        if (dimension < 1) {
            throw ConfigError("dimension must be positive");
        }
    }

    friend bool operator==(const FbmConfig&, const FbmConfig&) = default;
};

enum class PathKind { W, B, X, K };

inline const char* to_string(PathKind kind) {
    switch (kind) {
    case PathKind::W: return "W";
    case PathKind::B: return "B";
    case PathKind::X: return "X";
    case PathKind::K: return "K";
    }
    return "?";
}

inline PathKind path_kind_from_string(const std::string& s) {
    if (s == "W") return PathKind::W;
    if (s == "B") return PathKind::B;
    if (s == "X") return PathKind::X;
    if (s == "K") return PathKind::K;
    throw ConfigError("unknown path kind '" + s + "'");
}

/// A d-dimensional path sampled on times[0..n]; values are row-major
/// (time-major, coordinate-minor).
struct GridPath {
    std::vector<double> times;
    std::vector<double> values;
    std::size_t dimension = 1;
    PathKind kind = PathKind::B;
    double hurst = 0.5;
    SeedLineage lineage{};

    std::size_t size() const { return times.size(); }
    std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
    double& operator()(std::size_t i, std::size_t c) { return values[i * dimension + c]; }
    double operator()(std::size_t i, std::size_t c) const { return values[i * dimension + c]; }
    std::span<const double> at(std::size_t i) const { return {values.data() + i * dimension, dimension}; }

    static GridPath zeros(const FbmConfig& config, PathKind kind, SeedLineage lineage = {}) {
        GridPath p;
        p.times.resize(config.n_steps + 1);
        for (std::size_t i = 0; i <= config.n_steps; ++i) {
            p.times[i] = config.time(i);
        }
        p.values.assign((config.n_steps + 1) * config.dimension, 0.0);
        p.dimension = config.dimension;
        p.kind = kind;
        p.hurst = config.hurst;
        p.lineage = lineage;
        return p;
    }
};

/// Covariance of two fBm increments of length dt that are `lag` steps apart:
/// dt^{2H} * (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2.
inline double fgn_covariance(double hurst, long lag, double dt) {
    if (!(dt > 0.0)) {
        throw std::domain_error("fgn_covariance: dt must be positive");
    }
    if (!(hurst > 0.0 && hurst <= 1.0)) {
        throw std::domain_error("fgn_covariance: hurst must lie in (0, 1]");
    }
    const double k = std::abs(static_cast<double>(lag));
    const double h2 = 2.0 * hurst;
    const double unit = 0.5 * (std::pow(k + 1.0, h2) - 2.0 * std::pow(k, h2) + std::pow(std::abs(k - 1.0), h2));
    return std::pow(dt, h2) * unit;
}

/// Analytic fBm covariance Cov(B_s, B_t).
inline double fbm_covariance(double hurst, double s, double t) {
    const double h2 = 2.0 * hurst;
    return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(t - s), h2));
}

/// Lower-triangular map from Brownian increments dW_1..dW_n (variance dt) to
/// fBm values B_{t_1}..B_{t_n}: B_i = scale * sum_{j<=i} unit(i, j) dW_j.
/// Built from the Cholesky factor of the fBm covariance in grid units; at
/// H = 1/2 the unit factor is exactly the all-ones lower triangle.
class VolterraKernel {
public:
    explicit VolterraKernel(const FbmConfig& config) : config_(config) {
        config_.validate();
        const auto n = static_cast<Eigen::Index>(config_.n_steps);
        const double h2 = 2.0 * config_.hurst;
        std::vector<double> power(static_cast<std::size_t>(n) + 1);
        for (std::size_t k = 0; k < power.size(); ++k) {
            power[k] = std::pow(static_cast<double>(k), h2);
        }
        Eigen::MatrixXd cov(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j <= i; ++j) {
                const auto a = static_cast<std::size_t>(i + 1);
                const auto b = static_cast<std::size_t>(j + 1);
                const double v = 0.5 * (power[a] + power[b] - power[a - b]);
                cov(i, j) = v;
                cov(j, i) = v;
            }
        }
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("VolterraKernel: fBm covariance is not positive definite");
        }
        unit_ = llt.matrixL();
        scale_ = std::pow(config_.dt(), config_.hurst - 0.5);
    }

    const FbmConfig& config() const { return config_; }
    std::size_t size() const { return config_.n_steps; }
    double hurst() const { return config_.hurst; }
    bool brownian() const { return config_.brownian(); }

    /// Weight of increment j (1-based, over (t_{j-1}, t_j]) in B at grid index i (1-based).
    double entry(std::size_t i, std::size_t j) const {
        if (j == 0 || j > i) {
            return 0.0;
        }
        return scale_ * unit_(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j - 1));
    }
    double scale() const { return scale_; }
    const Eigen::MatrixXd& unit_factor() const { return unit_; }

    /// sum_{j=from+1}^{to} unit(row, j)^2 in grid units (row, from, to are grid indices).
    double unit_row_sq_sum(std::size_t row, std::size_t from, std::size_t to) const {
        const Eigen::Index r = static_cast<Eigen::Index>(row - 1);
        double acc = 0.0;
        for (std::size_t j = from + 1; j <= to; ++j) {
            const double v = unit_(r, static_cast<Eigen::Index>(j - 1));
            acc += v * v;
        }
        return acc;
    }

    /// Dense physical matrix K with B = K dW (rows/cols are grid indices 1..n).
    Eigen::MatrixXd matrix() const { return scale_ * unit_; }

private:
    FbmConfig config_;
    Eigen::MatrixXd unit_;
    double scale_ = 1.0;
};

namespace detail {

inline void check_grid(const GridPath& path, const FbmConfig& config, const char* what) {
    const bool ok = path.size() == config.n_steps + 1 &&
                    std::abs(path.times.back() - config.horizon) <= 1e-12 * config.horizon &&
                    path.times.front() == 0.0;
    if (!ok) {
        throw PreconditionError(std::string(what) + ": path does not live on the kernel's grid");
    }
}

} // namespace detail

/// B = Abar(W): triangular matrix-vector product per coordinate.
inline GridPath apply_abar(const GridPath& w, const VolterraKernel& kernel) {
    detail::check_grid(w, kernel.config(), "apply_abar");
    GridPath b = w;
    b.kind = PathKind::B;
    b.hurst = kernel.hurst();
    if (kernel.brownian()) {
        return b;
    }
    const auto n = static_cast<Eigen::Index>(kernel.size());
    const std::size_t d = w.dimension;
    Eigen::VectorXd dw(n);
    for (std::size_t c = 0; c < d; ++c) {
        for (Eigen::Index j = 0; j < n; ++j) {
            dw(j) = w(static_cast<std::size_t>(j) + 1, c) - w(static_cast<std::size_t>(j), c);
        }
        Eigen::VectorXd out = kernel.unit_factor().triangularView<Eigen::Lower>() * dw;
        b(0, c) = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            b(static_cast<std::size_t>(i) + 1, c) = kernel.scale() * out(i);
        }
    }
    return b;
}

/// Brownian increments dW_1..dW_n recovered from an fBm path, one vector per coordinate.
inline std::vector<Eigen::VectorXd> recover_increments(const GridPath& b, const VolterraKernel& kernel) {
    detail::check_grid(b, kernel.config(), "recover_increments");
    const auto n = static_cast<Eigen::Index>(kernel.size());
    std::vector<Eigen::VectorXd> result;
    for (std::size_t c = 0; c < b.dimension; ++c) {
        Eigen::VectorXd rhs(n);
        if (kernel.brownian()) {
            for (Eigen::Index i = 0; i < n; ++i) {
                rhs(i) = b(static_cast<std::size_t>(i) + 1, c) - b(static_cast<std::size_t>(i), c);
            }
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                rhs(i) = (b(static_cast<std::size_t>(i) + 1, c) - b(0, c)) / kernel.scale();
            }
            kernel.unit_factor().triangularView<Eigen::Lower>().solveInPlace(rhs);
        }
        result.push_back(std::move(rhs));
    }
    return result;
}

/// W = A(B): solves the triangular system and re-accumulates increments.
inline GridPath apply_a(const GridPath& b, const VolterraKernel& kernel) {
    detail::check_grid(b, kernel.config(), "apply_a");
    GridPath w = b;
    w.kind = PathKind::W;
    w.hurst = 0.5;
    if (kernel.brownian()) {
        return w;
    }
    const auto increments = recover_increments(b, kernel);
    for (std::size_t c = 0; c < b.dimension; ++c) {
        double acc = 0.0;
        w(0, c) = 0.0;
        for (std::size_t i = 1; i <= kernel.size(); ++i) {
            acc += increments[c](static_cast<Eigen::Index>(i - 1));
            w(i, c) = acc;
        }
    }
    return w;
}

/// Gaussian law of B_r given the grid history up to u (both grid indices).
struct ConditionalMoments {
    std::vector<double> mean;
    double variance = 0.0;
};

/// Conditional variance sigma^2_{u,r} per coordinate; deterministic.
inline double conditional_variance(const VolterraKernel& kernel, std::size_t u, std::size_t r) {
    if (u >= r) {
        throw PreconditionError("conditional_variance: requires u < r");
    }
    if (r > kernel.size()) {
        throw PreconditionError("conditional_variance: r beyond the grid");
    }
    const double dt = kernel.config().dt();
    if (kernel.brownian()) {
        return dt * static_cast<double>(r - u);
    }
    return dt * kernel.scale() * kernel.scale() * kernel.unit_row_sq_sum(r, u, r);
}

/// Conditional mean/variance of one fBm path. Recovering W once makes every
/// conditional mean a partial sum over the kernel row.
class ConditionalLaw {
public:
    ConditionalLaw(const GridPath& b, const VolterraKernel& kernel)
        : kernel_(&kernel), increments_(recover_increments(b, kernel)) {}

    ConditionalMoments operator()(std::size_t u, std::size_t r) const {
        if (u >= r) {
            throw PreconditionError("conditional_law: requires u < r");
        }
        ConditionalMoments out;
        out.variance = conditional_variance(*kernel_, u, r);
        out.mean.resize(increments_.size());
        for (std::size_t c = 0; c < increments_.size(); ++c) {
            out.mean[c] = mean(u, r, c);
        }
        return out;
    }

    /// E[B_r | history up to u] for one coordinate.
    double mean(std::size_t u, std::size_t r, std::size_t c) const {
        if (kernel_->brownian()) {
            double acc = 0.0;
            for (std::size_t j = 1; j <= u; ++j) {
                acc += increments_[c](static_cast<Eigen::Index>(j - 1));
            }
            return acc;
        }
        const auto& unit = kernel_->unit_factor();
        const auto row = static_cast<Eigen::Index>(r - 1);
        double acc = 0.0;
        for (std::size_t j = 1; j <= u; ++j) {
            acc += unit(row, static_cast<Eigen::Index>(j - 1)) * increments_[c](static_cast<Eigen::Index>(j - 1));
        }
        return kernel_->scale() * acc;
    }

private:
    const VolterraKernel* kernel_;
    std::vector<Eigen::VectorXd> increments_;
};

inline ConditionalMoments conditional_law(const GridPath& b, std::size_t u, std::size_t r,
                                          const VolterraKernel& kernel) {
    return ConditionalLaw(b, kernel)(u, r);
}

struct SampleDiagnostics {
    bool embedding_fallback = false;
};

/// Exact-in-law fBm sampler. Circulant embedding of the fractional Gaussian
/// noise covariance by default; the Volterra (Cholesky) route is used when
/// the embedding has negative eigenvalues or when forced.
class FbmSampler {
public:
    explicit FbmSampler(const FbmConfig& config, bool force_cholesky = false) : config_(config) {
        config_.validate();
        if (!force_cholesky) {
            build_embedding();
        }
        if (!embedding_ok_) {
            diagnostics_.embedding_fallback = true;
            kernel_ = std::make_shared<VolterraKernel>(config_);
        }
    }

    const FbmConfig& config() const { return config_; }
    const SampleDiagnostics& diagnostics() const { return diagnostics_; }

    GridPath sample(const SeedLineage& lineage) const {
        GridPath path = GridPath::zeros(config_, PathKind::B, lineage);
        const std::size_t n = config_.n_steps;
        std::vector<double> increments(n);
        for (std::size_t c = 0; c < config_.dimension; ++c) {
            auto engine = make_stream(lineage, c);
            if (embedding_ok_) {
                sample_embedding(engine, increments);
            } else {
                sample_cholesky(engine, increments);
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += increments[i];
                path(i + 1, c) = acc;
            }
        }
        return path;
    }

private:
    void build_embedding() {
        const std::size_t n = config_.n_steps;
        const std::size_t m = 2 * n;
        ComplexBuffer row(m);
        for (std::size_t k = 0; k <= n; ++k) {
            row.set(k, fgn_covariance(config_.hurst, static_cast<long>(k), 1.0), 0.0);
        }
        for (std::size_t k = n + 1; k < m; ++k) {
            row.set(k, row.re(m - k), 0.0);
        }
        fft_inplace(row, true);
        double largest = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            largest = std::max(largest, std::abs(row.re(k)));
        }
        sqrt_eigen_.resize(m);
        embedding_ok_ = true;
        for (std::size_t k = 0; k < m; ++k) {
            double lambda = row.re(k);
            if (lambda < 0.0) {
                if (lambda < -1e-10 * largest) {
                    embedding_ok_ = false;
                    return;
                }
                lambda = 0.0;
            }
            sqrt_eigen_[k] = std::sqrt(lambda / static_cast<double>(m));
        }
    }

    // Real part of F(sqrt(lambda/m) Z) with complex standard Z has exactly
    // the circulant covariance; the first n entries are fGn in grid units.
    void sample_embedding(std::mt19937_64& engine, std::vector<double>& increments) const {
        const std::size_t m = sqrt_eigen_.size();
        std::normal_distribution<double> normal(0.0, 1.0);
        ComplexBuffer buf(m);
        for (std::size_t k = 0; k < m; ++k) {
            const double a = normal(engine);
            const double b = normal(engine);
            buf.set(k, sqrt_eigen_[k] * a, sqrt_eigen_[k] * b);
        }
        fft_inplace(buf, true);
        const double scale = std::pow(config_.dt(), config_.hurst);
        for (std::size_t i = 0; i < increments.size(); ++i) {
            increments[i] = scale * buf.re(i);
        }
    }

    void sample_cholesky(std::mt19937_64& engine, std::vector<double>& increments) const {
        const std::size_t n = config_.n_steps;
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd dw(static_cast<Eigen::Index>(n));
        const double sdt = std::sqrt(config_.dt());
        for (std::size_t j = 0; j < n; ++j) {
            dw(static_cast<Eigen::Index>(j)) = sdt * normal(engine);
        }
        Eigen::VectorXd b = kernel_->unit_factor().triangularView<Eigen::Lower>() * dw;
        double prev = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = kernel_->scale() * b(static_cast<Eigen::Index>(i));
            increments[i] = v - prev;
            prev = v;
        }
    }

    FbmConfig config_;
    bool embedding_ok_ = false;
    std::vector<double> sqrt_eigen_;
    std::shared_ptr<VolterraKernel> kernel_;
    SampleDiagnostics diagnostics_;
};

inline GridPath sample_fbm(const FbmConfig& config, const SeedLineage& lineage,
                           SampleDiagnostics* diagnostics = nullptr) {
    FbmSampler sampler(config);
    if (diagnostics) {
        *diagnostics = sampler.diagnostics();
    }
    return sampler.sample(lineage);
}

/// Brownian path on the same grid (kind W) from the same lineage convention.
inline GridPath sample_brownian(const FbmConfig& config, const SeedLineage& lineage) {
    FbmConfig bm = config;
    bm.hurst = 0.5;
    GridPath w = FbmSampler(bm).sample(lineage);
    w.kind = PathKind::W;
    w.hurst = 0.5;
    return w;
}

} // namespace fbmlab
