// Skew Brownian motion from a Dirac drift.
//
// At H = 1/2 the equation dX = kappa delta_0(X) dt + dB started at 0 has
// P(X_1 > 0) = (1 + tanh kappa) / 2. The demo solves the mollified equation
// for a few eps, then repeats at H = 0.3 where no closed form is known.

#include "fbmlab/mc.hpp"
#include "fbmlab/stats.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

using namespace fbmlab;

namespace {

struct Summary {
    double positive = 0.0;  ///< fraction of paths with X_1 > 0
    double mean_k = 0.0;    ///< E K_1
    std::size_t exits = 0;
};

Summary simulate(double hurst, double kappa, double eps, std::size_t n_steps, std::size_t paths) {
    SolveSetup setup;
    setup.spec = std::make_shared<const DriftSpec>(DriftSpec::dirac(1, {kappa}));
    setup.lattice = SpatialLattice{1, 20.0, 16384};
    setup.x0 = {0.0};
    setup.hurst = hurst;
    setup.n_steps = n_steps;
    const SmoothedDrift b(setup.spec, eps, setup.lattice);
    const NoiseSource noise(setup.fbm(), 2024);

    std::vector<double> positive(paths), k_end(paths);
    std::vector<char> exited(paths);
    parallel_for(paths, [&](std::size_t p) {
        const SolutionPath sol = setup.solve(b, eps, noise(p));
        const std::size_t n = sol.X.steps();
        positive[p] = sol.X(n, 0) > 0.0 ? 1.0 : 0.0;
        k_end[p] = sol.K(n, 0);
        exited[p] = sol.completed() ? 0 : 1;
    });
    Summary s;
    s.positive = stats::mean(positive);
    s.mean_k = stats::mean(k_end);
    for (char e : exited) {
        s.exits += static_cast<std::size_t>(e);
    }
    return s;
}

} // namespace

int main() {
    const double kappa = 1.0;
    const std::size_t paths = 4000;
    const double exact = 0.5 * (1.0 + std::tanh(kappa));
    const double se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(paths));

    std::printf("kappa=%.2f paths=%zu\n", kappa, paths);
    std::printf("H=0.5: skew Brownian motion, P(X_1 > 0) = %.4f (+- %.4f)\n", exact, se);
    std::printf("%8s %10s %12s %10s %8s\n", "steps", "eps", "P(X_1>0)", "E K_1", "exits");
    for (std::size_t n_steps : {1024u, 8192u}) {
        for (double eps : {1e-2, 1e-3, 1e-4}) {
            const Summary s = simulate(0.5, kappa, eps, n_steps, paths);
            std::printf("%8zu %10.0e %12.4f %10.4f %8zu\n", n_steps, eps, s.positive, s.mean_k, s.exits);
        }
    }
    std::printf("H=0.3\n");
    std::printf("%8s %10s %12s %10s %8s\n", "steps", "eps", "P(X_1>0)", "E K_1", "exits");
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        const Summary s = simulate(0.3, kappa, eps, 1024, paths);
        std::printf("%8d %10.0e %12.4f %10.4f %8zu\n", 1024, eps, s.positive, s.mean_k, s.exits);
    }
    return 0;
}
