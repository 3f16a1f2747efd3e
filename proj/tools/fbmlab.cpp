#include "fbmlab/config.hpp"
#include "fbmlab/io.hpp"
#include "fbmlab/mc.hpp"
#include "fbmlab/runner.hpp"
#include "fbmlab/sewing.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

using namespace fbmlab;

namespace {

constexpr int exit_pass = 0;
constexpr int exit_gate = 1;
constexpr int exit_config = 2;

/// Header for files written by a subcommand: the hash covers its arguments.
OutputHeader command_header(const Json& args, std::uint64_t seed) { return {hex64(fnv1a(args.dump())), seed}; }

struct DriftArgs {
    std::string type = "dirac";
    std::vector<double> weight;
    std::vector<double> location;
    std::vector<double> value;
    double scale = 1.0;
    std::size_t dimension = 1;
    double eps = 1e-2;
    std::string kernel = "gaussian";
    double half_width = 20.0;
    std::size_t points = 16384;

    void attach(CLI::App* app) {
        app->add_option("--drift", type, "dirac, constant or tanh")->capture_default_str();
        app->add_option("--weight", weight, "dirac weight per component (default all ones)");
        app->add_option("--location", location, "dirac location (default origin)");
        app->add_option("--value", value, "constant drift value");
        app->add_option("--scale", scale, "tanh length scale")->capture_default_str();
        app->add_option("--dim", dimension, "spatial dimension")->capture_default_str();
        app->add_option("--eps", eps, "mollification scale (heat-kernel variance)")->capture_default_str();
        app->add_option("--kernel", kernel, "gaussian or bump")->capture_default_str();
        app->add_option("--half-width", half_width, "lattice half-width L")->capture_default_str();
        app->add_option("--points", points, "lattice points per axis")->capture_default_str();
    }

    SpatialLattice lattice() const {
        const SpatialLattice l{dimension, half_width, points};
        l.validate();
        return l;
    }

    DriftSpec spec() const {
        DriftConfig d;
        d.type = type;
        if (type == "dirac") {
            d.atoms = {Atom{location.empty() ? std::vector<double>(dimension, 0.0) : location,
                            weight.empty() ? std::vector<double>(dimension, 1.0) : weight}};
        }
        d.value = value;
        d.scale = scale;
        if (!(eps > 0.0)) {
            throw ConfigError("--eps must be positive");
        }
        return d.build(dimension);
    }

    Json json() const {
        return Json{{"drift", type},     {"weight", weight}, {"location", location},       {"value", value},
                    {"scale", scale},    {"dim", dimension}, {"eps", eps},                 {"kernel", kernel},
                    {"half_width", half_width},             {"points", points}};
    }
};

void print_fit(const MomentTable& table, const ExponentFit& fit) {
    for (std::size_t l = 0; l < table.lags.size(); ++l) {
        std::printf("lag=%-12.6g estimate=%-14.8g se=%.3g\n", table.lags[l].length, table.estimates[l],
                    table.std_errors[l]);
    }
    std::printf("slope=%.6f  95%% CI [%.6f, %.6f]  r2=%.6f  points=%zu\n", fit.slope, fit.ci_lo, fit.ci_hi,
                fit.r_squared, fit.points);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fbmlab: SDEs driven by fractional Brownian motion with distributional drifts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    // run
    std::string config_path, out_dir = "out";
    auto* run = app.add_subcommand("run", "run the suite of a config file");
    run->add_option("config", config_path, "config JSON")->required();
    run->add_option("-o,--out", out_dir, "output directory")->capture_default_str();

    // sample-fbm
    double hurst = 0.5, horizon = 1.0;
    std::size_t steps = 1024, n_paths = 1, dim = 1;
    std::uint64_t seed = 1;
    std::string out_base;
    auto* sample = app.add_subcommand("sample-fbm", "sample fBm paths into a path container");
    sample->add_option("--hurst", hurst, "Hurst index in (0, 1/2]")->capture_default_str();
    sample->add_option("--steps", steps, "grid steps")->capture_default_str();
    sample->add_option("--paths", n_paths, "number of paths")->capture_default_str();
    sample->add_option("--dim", dim, "dimension")->capture_default_str();
    sample->add_option("--horizon", horizon, "time horizon T")->capture_default_str();
    sample->add_option("--seed", seed, "master seed")->capture_default_str();
    sample->add_option("-o,--out", out_base, "output base path (.bin/.json)")->required();

    // mollify
    DriftArgs mollify_args;
    auto* moll = app.add_subcommand("mollify", "sample a mollified drift on the lattice");
    mollify_args.attach(moll);
    moll->add_option("-o,--out", out_base, "output base path (.bin/.json)")->required();

    // solve
    DriftArgs solve_args;
    std::string noise_base, quadrature = "bridge";
    std::vector<double> x0;
    auto* solve = app.add_subcommand("solve", "Euler solutions for the noise paths of a container");
    solve_args.attach(solve);
    solve->add_option("--noise", noise_base, "fBm path container (kind B)")->required();
    solve->add_option("--quadrature", quadrature, "segment or bridge")->capture_default_str();
    solve->add_option("--x0", x0, "initial point (default origin)");
    solve->add_option("-o,--out", out_base, "output base; writes <out>_X and <out>_K")->required();

    // sew-check
    DriftArgs sew_args;
    std::string solution_base, report_out;
    int level_lo = 3, level_hi = 8;
    double tolerance = 0.1;
    auto* sew = app.add_subcommand("sew-check", "sewing conditions and Riemann bounds on solved paths");
    sew_args.attach(sew);
    sew->add_option("--solution", solution_base, "base given to solve (reads <base>_X, <base>_K)")->required();
    sew->add_option("--level-lo", level_lo, "finest lag level is 2^-level_hi")->capture_default_str();
    sew->add_option("--level-hi", level_hi, "coarsest lag level is 2^-level_lo")->capture_default_str();
    sew->add_option("--tolerance", tolerance, "tolerance on alpha1")->capture_default_str();
    sew->add_option("-o,--out", report_out, "report JSON path");

    // estimate
    std::string paths_base, quantity = "B", csv_out;
    double m = 2.0;
    int est_lo = 3, est_hi = 10;
    auto* est = app.add_subcommand("estimate", "L^m increment moments and fitted exponent of stored paths");
    est->add_option("--paths", paths_base, "path container")->required();
    est->add_option("--quantity", quantity, "B, X or K; must match the stored kind")->capture_default_str();
    est->add_option("--m", m, "moment order >= 2")->capture_default_str();
    est->add_option("--level-lo", est_lo, "coarsest lag T 2^-level_lo")->capture_default_str();
    est->add_option("--level-hi", est_hi, "finest lag T 2^-level_hi")->capture_default_str();
    est->add_option("-o,--out", csv_out, "CSV table path");

    // report
    std::string report_path;
    auto* rep = app.add_subcommand("report", "render a JSON suite report as a table");
    rep->add_option("report", report_path, "report JSON")->required();

    // aggregate
    std::vector<std::string> inputs;
    std::string agg_out;
    auto* agg = app.add_subcommand("aggregate", "concatenate CSV tables of one config");
    agg->add_option("inputs", inputs, "CSV files")->required();
    agg->add_option("-o,--out", agg_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    }

    try {
        if (*run) {
            const ExperimentConfig config = load_config(config_path);
            const RunManifest manifest = run_experiment(config, out_dir);
            std::cout << render_report(io::read_json(manifest.outputs.at(manifest.suite).back()));
            std::cout << "manifest: " << (std::filesystem::path(out_dir) / "manifest.json").string() << "\n";
            if (!manifest.error.empty()) {
                std::cerr << "error: " << manifest.error << "\n";
            }
            return manifest.passed ? exit_pass : exit_gate;
        }
        if (*sample) {
            const FbmConfig cfg{hurst, horizon, steps, dim};
            cfg.validate();
            if (n_paths == 0) {
                throw ConfigError("--paths must be positive");
            }
            const Json args{{"command", "sample-fbm"}, {"hurst", hurst}, {"steps", steps}, {"paths", n_paths},
                            {"dim", dim},              {"horizon", horizon}, {"seed", seed}};
            const NoiseSource noise(cfg, seed);
            std::vector<GridPath> paths(n_paths);
            parallel_for(n_paths, [&](std::size_t p) { paths[p] = noise(p); });
            write_paths(out_base, paths, command_header(args, seed));
            std::cout << "wrote " << n_paths << " paths to " << io::binary_path(out_base) << "\n";
            return exit_pass;
        }
        if (*moll) {
            const DriftSpec spec = mollify_args.spec();
            const GridFunction g =
                mollify(spec, mollify_args.eps, mollify_args.lattice(), mollifier_from_string(mollify_args.kernel));
            Json args = mollify_args.json();
            args["command"] = "mollify";
            write_grid_function(out_base, g, command_header(args, 0), args);
            std::cout << "wrote " << g.values.size() << " values to " << io::binary_path(out_base) << "\n";
            return exit_pass;
        }
        if (*solve) {
            const PathFile noise = read_paths(noise_base);
            if (noise.paths.empty() || noise.paths.front().kind != PathKind::B) {
                throw ConfigError("solve: --noise must hold fBm paths (kind B)");
            }
            if (noise.paths.front().dimension != solve_args.dimension) {
                throw ConfigError("solve: noise dimension differs from --dim");
            }
            SolveSetup setup;
            setup.spec = std::make_shared<const DriftSpec>(solve_args.spec());
            setup.lattice = solve_args.lattice();
            setup.x0 = x0.empty() ? std::vector<double>(solve_args.dimension, 0.0) : x0;
            if (setup.x0.size() != solve_args.dimension) {
                throw ConfigError("solve: --x0 needs one entry per dimension");
            }
            const GridPath& first = noise.paths.front();
            setup.hurst = first.hurst;
            setup.n_steps = first.steps();
            setup.horizon = first.times.back();
            setup.quadrature = drift_quadrature_from_string(quadrature);
            const SmoothedDrift b(setup.spec, solve_args.eps, setup.lattice,
                                  mollifier_from_string(solve_args.kernel));
            std::vector<GridPath> xs(noise.paths.size()), ks(noise.paths.size());
            std::vector<char> exited(noise.paths.size(), 0);
            parallel_for(noise.paths.size(), [&](std::size_t p) {
                const SolutionPath sol = setup.solve(b, solve_args.eps, noise.paths[p]);
                exited[p] = sol.completed() ? 0 : 1;
                xs[p] = sol.X;
                ks[p] = sol.K;
            });
            for (std::size_t p = 0; p < exited.size(); ++p) {
                if (exited[p]) {
                    throw BoxExitError("solve: path " + std::to_string(p) + " left the lattice box; enlarge --half-width");
                }
            }
            Json args = solve_args.json();
            args["command"] = "solve";
            args["noise_hash"] = noise.header.config_hash;
            args["quadrature"] = quadrature;
            args["x0"] = setup.x0;
            const OutputHeader header = command_header(args, noise.header.master_seed);
            write_paths(out_base + "_X", xs, header);
            write_paths(out_base + "_K", ks, header);
            std::cout << "wrote " << xs.size() << " solutions to " << out_base << "_X/_K\n";
            return exit_pass;
        }
        if (*sew) {
            const PathFile xs = read_paths(solution_base + "_X");
            const PathFile ks = read_paths(solution_base + "_K");
            if (xs.paths.size() != ks.paths.size() || xs.header != ks.header) {
                throw ConfigError("sew-check: X and K containers do not belong together");
            }
            std::vector<SolutionPath> ensemble(xs.paths.size());
            for (std::size_t p = 0; p < ensemble.size(); ++p) {
                ensemble[p].X = xs.paths[p];
                ensemble[p].K = ks.paths[p];
            }
            const GridPath& first = xs.paths.front();
            auto spec = std::make_shared<const DriftSpec>(sew_args.spec());
            const SmoothedDrift h(spec, sew_args.eps, sew_args.lattice());
            const FbmConfig cfg{first.hurst, first.times.back(), first.steps(), first.dimension};
            const std::size_t substeps = plan_substeps(cfg.hurst, cfg.dt(), sew_args.eps);
            SewingOptions opt;
            opt.level_lo = level_lo;
            opt.level_hi = level_hi;
            opt.germ_substeps = substeps;
            const SewingReport r = fit_sewing_conditions(h, ensemble, VolterraKernel(cfg), opt);
            const double c1 = c1_norm(h.grid());
            std::size_t riemann_ok = 0;
            for (const auto& sol : ensemble) {
                riemann_ok += riemann_convergence(h, c1, SewingPath::from(sol), cfg.n_steps, {2, 3, 4, 5, 6, 7, 8},
                                                  substeps)
                                  .all_hold
                                  ? 1
                                  : 0;
            }
            const double alpha_target = 1.0 + cfg.hurst * (spec->declared_beta - 1.0);
            std::vector<Gate> gates{
                {"alpha1", "conditional defect exponent in |t-s|^{alpha1} lambda^{beta1}", r.alpha1, alpha_target, "~",
                 std::abs(r.alpha1 - alpha_target) <= tolerance},
                {"beta1", "random control exponent of the conditional defect", r.beta1, 1.0, "~",
                 std::abs(r.beta1 - 1.0) <= 0.15},
                {"alpha1 + beta1", "stochastic sewing condition alpha1 + beta1 > 1", r.alpha1 + r.beta1, 1.0, ">",
                 r.alpha1 + r.beta1 > 1.0},
                {"L^m defect slope", "L^m defect exponent 1/2 + margin", r.lm_slope, 0.6, ">=", r.lm_slope >= 0.6},
                {"conditional bound", "pathwise conditional-defect bound on every tested triple",
                 static_cast<double>(r.bound_violations), 0.0, "==", r.bound_checked > 0 && r.bound_violations == 0},
                {"Riemann bound", "pathwise Riemann-sum bound c1 |Pi| lambda(0,t) at dyadic levels 2..8",
                 static_cast<double>(riemann_ok) / static_cast<double>(ensemble.size()), 1.0, "==",
                 riemann_ok == ensemble.size()}};
            Json report = io::header_json(xs.header);
            report["name"] = solution_base;
            report["suite"] = "sew-check";
            Json gj = Json::array();
            bool all = true;
            for (const Gate& g : gates) {
                gj.push_back(to_json(g));
                all = all && g.passed;
            }
            report["gates"] = gj;
            report["passes"] = all;
            if (!report_out.empty()) {
                io::write_json(report_out, report);
            }
            std::cout << render_report(report);
            return all ? exit_pass : exit_gate;
        }
        if (*est) {
            const PathFile file = read_paths(paths_base);
            const GridPath& first = file.paths.front();
            const std::string kind = to_string(first.kind);
            if (quantity != kind) {
                throw ConfigError("estimate: --quantity " + quantity + " does not match the stored kind " + kind);
            }
            const LagWindow window{est_lo, est_hi};
            window.validate(first.steps());
            if (!(m >= 2.0)) {
                throw ConfigError("estimate: --m must be >= 2");
            }
            const auto lags = make_lags(window, first.steps(), first.times.back());
            std::vector<std::vector<double>> samples(file.paths.size());
            parallel_for(file.paths.size(), [&](std::size_t p) {
                const GridPath& g = file.paths[p];
                samples[p] = increment_power_means(g.dimension, [&](std::size_t i, std::size_t c) { return g(i, c); },
                                                   lags, m, g.steps());
            });
            MomentOptions opt;
            opt.min_paths = std::min<std::size_t>(opt.min_paths, file.paths.size());
            opt.bootstrap_seed = file.header.master_seed;
            const Quantity q = first.kind == PathKind::K ? Quantity::K : Quantity::B;
            const MomentTable table = moment_table(q, m, lags, samples, opt);
            const ExponentFit fit = fit_exponent(table);
            print_fit(table, fit);
            if (!csv_out.empty()) {
                CsvTable t{file.header, {"m", "lag", "estimate", "std_error"}, {}};
                runner::add_moment_rows(t, table);
                write_csv(csv_out, t);
            }
            return exit_pass;
        }
        if (*rep) {
            std::cout << render_report(io::read_json(report_path));
            return exit_pass;
        }
        if (*agg) {
            std::vector<CsvTable> tables;
            for (const auto& in : inputs) {
                tables.push_back(read_csv(in));
            }
            const CsvTable merged = aggregate_csv(tables);
            write_csv(agg_out, merged);
            std::cout << "wrote " << merged.rows.size() << " rows to " << agg_out << "\n";
            return exit_pass;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_gate;
    }
    return exit_config;
}
