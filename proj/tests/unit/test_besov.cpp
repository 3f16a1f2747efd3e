#include "fbmlab/besov.hpp"
#include "fbmlab/drift.hpp"
#include "fbmlab/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace fbmlab;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

SpatialLattice line(double half_width, std::size_t points) { return {1, half_width, points}; }

double max_abs(const GridFunction& f) {
    double m = 0.0;
    for (double v : f.values) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

GridFunction lattice_delta(const SpatialLattice& lat) {
    GridFunction f(lat, lat.dimension);
    std::size_t flat = 0;
    for (std::size_t a = 0; a < lat.dimension; ++a) {
        flat = flat * lat.points + lat.points / 2;
    }
    for (std::size_t c = 0; c < lat.dimension; ++c) {
        f.component(c)[flat] = 1.0 / lat.cell_volume();
    }
    return f;
}

GridFunction trig_mix(const SpatialLattice& lat) {
    const double k = M_PI / lat.half_width;
    return GridFunction::sample(lat, 1, [k](std::span<const double> x, std::span<double> out) {
        double v = 0.3;
        for (double xi : x) {
            v += std::sin(k * xi) + 0.5 * std::cos(7 * k * xi) - 0.2 * std::sin(40 * k * xi + 0.3);
        }
        out[0] = v;
    });
}

} // namespace

TEST(Partition, SumsToOneOnResolvedFrequencies) {
    for (std::size_t d : {1u, 2u}) {
        SpatialLattice lat{d, 3.0, d == 1 ? 4096u : 256u};
        const auto part = build_partition(lat);
        EXPECT_GE(part.j_max(), 3);
        for (std::size_t k = 0; k < lat.points; ++k) {
            for (std::size_t m = 0; m < (d == 1 ? 1 : lat.points); ++m) {
                const double a = lat.frequency(k);
                const double b = d == 1 ? 0.0 : lat.frequency(m);
                const double r = std::hypot(a, b);
                double sum = part.chi(r);
                for (int j = 0; j <= part.j_max(); ++j) {
                    sum += part.rho(j, r);
                }
                ASSERT_NEAR(sum, 1.0, 1e-12) << "r=" << r;
            }
        }
    }
}

TEST(Partition, OriginBelongsToLowPass) {
    const auto part = build_partition(line(1.0, 256));
    EXPECT_EQ(part.chi(0.0), 1.0);
    for (int j = 0; j <= part.j_max(); ++j) {
        EXPECT_EQ(part.rho(j, 0.0), 0.0);
    }
}

TEST(Partition, SupportsAreDisjoint) {
    SpatialLattice lat = line(2.0, 8192);
    const auto part = build_partition(lat);
    for (std::size_t k = 0; k < lat.points; ++k) {
        const double r = std::abs(lat.frequency(k));
        for (int i = 0; i <= part.j_max(); ++i) {
            for (int j = i + 2; j <= part.j_max(); ++j) {
                ASSERT_EQ(part.rho(i, r) * part.rho(j, r), 0.0);
            }
            if (i >= 1) {
                ASSERT_EQ(part.chi(r) * part.rho(i, r), 0.0);
            }
        }
    }
}

TEST(Partition, CoarseLatticeIsConfigError) {
    // nyquist = pi/h = 64 pi / 2000; only a handful of annuli fit
    EXPECT_THROW(build_partition(line(1000.0, 64)), ConfigError);
    EXPECT_THROW(build_partition(line(1.0, 48)), ConfigError);
}

TEST(LpBlock, BelowLowPassIsZero) {
    const GridFunction f = trig_mix(line(1.0, 256));
    const GridFunction z = lp_block(f, -2);
    EXPECT_EQ(max_abs(z), 0.0);
    EXPECT_EQ(max_abs(lp_block(f, -7)), 0.0);
}

TEST(LpBlock, ConstantLivesInLowPass) {
    const SpatialLattice lat = line(1.0, 256);
    const GridFunction c(lat, 1, 2.5);
    const GridFunction low = lp_block(c, -1);
    for (double v : low.values) {
        EXPECT_NEAR(v, 2.5, 1e-12);
    }
    for (int j = 0; j <= build_partition(lat).j_max(); ++j) {
        EXPECT_LT(max_abs(lp_block(c, j)), 1e-12);
    }
}

TEST(LpBlock, BlocksReconstructTheFunction) {
    for (std::size_t d : {1u, 2u}) {
        SpatialLattice lat{d, 1.0, d == 1 ? 1024u : 128u};
        const GridFunction f = trig_mix(lat);
        LittlewoodPaley lp(f);
        GridFunction sum(lat, 1);
        for (int j = -1; j <= lp.partition().j_max(); ++j) {
            const GridFunction b = lp.block(j);
            for (std::size_t i = 0; i < sum.values.size(); ++i) {
                sum.values[i] += b.values[i];
            }
        }
        EXPECT_LT(max_abs(sum - f), 1e-8);
    }
}

TEST(LpBlock, FarBlocksAreOrthogonal) {
    const GridFunction f = trig_mix(line(1.0, 1024));
    const int jmax = build_partition(f.lattice).j_max();
    const double scale = max_abs(f);
    for (int i = -1; i <= jmax; ++i) {
        const GridFunction bi = lp_block(f, i);
        for (int j = -1; j <= jmax; ++j) {
            if (std::abs(i - j) >= 2) {
                EXPECT_LT(max_abs(lp_block(bi, j)), 1e-10 * scale) << i << "," << j;
            }
        }
    }
}

TEST(BesovNorm, ZeroFunction) {
    EXPECT_EQ(besov_norm(GridFunction(line(1.0, 256), 1), 0.5, inf), 0.0);
    EXPECT_EQ(besov_norm(GridFunction(line(1.0, 256), 1), -1.0, 1.0), 0.0);
}

TEST(BesovNorm, TranslationInvariantUnderLatticeShifts) {
    const SpatialLattice lat = line(4.0, 1024);
    const GridFunction f = mollify(DriftSpec::dirac(1, {1.0}, {0.3}), 0.01, lat);
    for (long shift : {1L, 17L, -250L}) {
        const std::vector<long> off{shift};
        const GridFunction g = lattice_shift(f, off);
        for (double s : {-1.0, 0.0, 0.7}) {
            for (double p : {1.0, 2.0, inf}) {
                const double a = besov_norm(f, s, p);
                const double b = besov_norm(g, s, p);
                EXPECT_LE(std::abs(a - b), 1e-10 * a) << shift << " " << s << " " << p;
            }
        }
    }
    // d = 2
    SpatialLattice sq{2, 4.0, 128};
    const GridFunction f2 = mollify(DriftSpec::dirac(2, {1.0, 0.5}), 0.05, sq);
    const std::vector<long> off{5, -9};
    EXPECT_LE(std::abs(besov_norm(f2, -2, inf) - besov_norm(lattice_shift(f2, off), -2, inf)),
              1e-10 * besov_norm(f2, -2, inf));
}

TEST(BesovNorm, MonotoneInSmoothness) {
    const SpatialLattice lat = line(4.0, 2048);
    std::vector<GridFunction> fs{trig_mix(lat), mollify(DriftSpec::dirac(1, {1.0}), 0.003, lat), GridFunction(lat, 1, 3.0)};
    for (const auto& f : fs) {
        for (double p : {1.0, 2.0, inf}) {
            double prev = 0.0;
            for (double s = -2.0; s <= 2.0; s += 0.25) {
                const double v = besov_norm(f, s, p);
                EXPECT_GE(v, prev);
                prev = v;
            }
        }
    }
}

TEST(BesovNorm, MollifiedDiracBoundedInB01) {
    const SpatialLattice lat = line(20.0, 1 << 16);
    std::vector<double> norms;
    for (int k = 2; k <= 12; ++k) {
        norms.push_back(besov_norm(mollify(DriftSpec::dirac(1, {1.0}), std::ldexp(1.0, -k), lat), 0.0, 1.0));
    }
    const double hi = *std::max_element(norms.begin(), norms.end());
    const double lo = *std::min_element(norms.begin(), norms.end());
    EXPECT_LE(hi / lo, 4.0);
}

TEST(C1Norm, Constant) {
    EXPECT_NEAR(c1_norm(GridFunction(line(1.0, 256), 1, -2.5)), 2.5, 1e-12);
}

TEST(C1Norm, SineWave) {
    const double L = 3.0;
    const SpatialLattice lat = line(L, 1024);
    const GridFunction f = GridFunction::sample(
        lat, 1, [L](std::span<const double> x, std::span<double> out) { out[0] = std::sin(M_PI * x[0] / L); });
    EXPECT_NEAR(c1_norm(f), 1.0 + M_PI / L, 1e-4);
}

// Oracle: sup g_t + sup |g_t'| ~ t^{-1}, so the log-log slope tends to -1.
TEST(C1Norm, HeatSmoothingExponent) {
    const SpatialLattice lat = line(1.0, 1 << 16);
    const auto spec = DriftSpec::dirac(1, {1.0});
    std::vector<double> lt, lc;
    for (double t = 1e-6; t <= 1.01e-3; t *= std::sqrt(10.0)) {
        lt.push_back(std::log(t));
        lc.push_back(std::log(c1_norm(mollify(spec, t, lat))));
    }
    EXPECT_NEAR(stats::weighted_fit(lt, lc).slope, -1.0, 0.05);
}

TEST(BetaMinus, ConstantFamilyPasses) {
    const SpatialLattice lat = line(1.0, 256);
    const GridFunction f = trig_mix(lat);
    const auto report = check_beta_minus({f, f, f}, f, 0.5);
    EXPECT_TRUE(report.passes);
    for (const auto& probe : report.probes) {
        for (double d : probe.distances) {
            EXPECT_EQ(d, 0.0);
        }
    }
}

TEST(BetaMinus, MollifiedDiracConvergesBelowMinusOne) {
    const SpatialLattice lat = line(20.0, 16384);
    const auto spec = DriftSpec::dirac(1, {1.0});
    std::vector<GridFunction> family;
    for (int k = 4; k <= 10; ++k) {
        family.push_back(mollify(spec, 1.0 / std::ldexp(1.0, k), lat));
    }
    const auto report = check_beta_minus(family, lattice_delta(lat), -1.0);
    EXPECT_TRUE(report.bounded) << report.bound_ratio;
    EXPECT_TRUE(report.passes);
    const auto& d11 = report.probes.front();
    EXPECT_NEAR(d11.beta_prime, -1.1, 1e-12);
    EXPECT_LT(d11.distances.back(), d11.distances.front());
}

TEST(BetaMinus, ScaledBumpFailsBoundedness) {
    const SpatialLattice lat = line(4.0, 1024);
    const GridFunction bump = mollify(DriftSpec::dirac(1, {1.0}), 0.1, lat);
    std::vector<GridFunction> family;
    for (int n = 1; n <= 8; ++n) {
        family.push_back(bump * static_cast<double>(n));
    }
    const auto report = check_beta_minus(family, GridFunction(lat, 1), 0.0);
    EXPECT_FALSE(report.bounded);
    EXPECT_FALSE(report.passes);
}

TEST(BetaMinus, EmptyFamilyIsPrecondition) {
    EXPECT_THROW(check_beta_minus({}, GridFunction(line(1.0, 256), 1), 0.0), PreconditionError);
}
