#pragma once

// Suite execution for one ExperimentConfig: runs the experiment, writes CSV
// tables and a JSON report per suite as soon as they exist, and returns the
// run manifest. Gates carry descriptive anchor strings that `report` prints.

#include "fbmlab/config.hpp"
#include "fbmlab/io.hpp"
#include "fbmlab/mc.hpp"
#include "fbmlab/sewing.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#ifndef FBMLAB_VERSION
#define FBMLAB_VERSION "unknown"
#endif

namespace fbmlab {

inline std::string code_version() { return FBMLAB_VERSION; }

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline Json to_json(const Gate& g) {
    return Json{{"name", g.name},         {"anchor", g.anchor},     {"value", g.value},
                {"target", g.target},     {"relation", g.relation}, {"passed", g.passed}};
}

inline Gate gate_from_json(const Json& j) {
    try {
        return Gate{j.at("name").get<std::string>(),  j.at("anchor").get<std::string>(),
                    j.at("value").get<double>(),      j.at("target").get<double>(),
                    j.at("relation").get<std::string>(), j.at("passed").get<bool>()};
    } catch (const Json::exception&) {
        throw ConfigError("report: malformed gate entry");
    }
}

/// Result of one suite: its gates, free-form details and the files written.
struct SuiteResult {
    std::vector<Gate> gates;
    Json details = Json::object();
    std::vector<std::string> files;

    bool passed() const {
        return std::all_of(gates.begin(), gates.end(), [](const Gate& g) { return g.passed; });
    }
};

struct RunManifest {
    std::string name;
    std::string suite;
    std::string config_hash;
    std::uint64_t master_seed = 0;
    std::string code_version;
    std::string started;
    std::string finished;
    std::map<std::string, std::vector<std::string>> outputs;
    std::size_t gates_total = 0;
    std::size_t gates_failed = 0;
    std::string error;  ///< set when the suite stopped early
    bool passed = false;

    Json to_json() const {
        return Json{{"name", name},
                    {"suite", suite},
                    {"config_hash", config_hash},
                    {"master_seed", master_seed},
                    {"code_version", code_version},
                    {"started", started},
                    {"finished", finished},
                    {"outputs", outputs},
                    {"summary",
                     Json{{"gates_total", gates_total}, {"gates_failed", gates_failed}, {"passed", passed},
                          {"error", error}}}};
    }
};

namespace runner {

struct Context {
    const ExperimentConfig& config;
    OutputHeader header;
    std::filesystem::path dir;
    SuiteResult& result;

    std::string file(const std::string& stem) const { return (dir / stem).string(); }

    void csv(const std::string& stem, const CsvTable& table) {
        const std::string path = file(stem + ".csv");
        write_csv(path, table);
        result.files.push_back(path);
    }

    CsvTable table(std::vector<std::string> columns) const { return CsvTable{header, std::move(columns), {}}; }

    void gate(std::string name, std::string anchor, double value, double target, std::string relation, bool ok) {
        result.gates.push_back(Gate{std::move(name), std::move(anchor), value, target, std::move(relation), ok});
    }
};

inline SolveSetup make_setup(const ExperimentConfig& c) {
    SolveSetup setup;
    setup.spec = std::make_shared<const DriftSpec>(c.drift_spec());
    setup.lattice = c.lattice();
    setup.x0 = c.start();
    setup.hurst = c.hurst;
    setup.n_steps = c.n_steps;
    setup.horizon = c.horizon;
    setup.master_seed = c.master_seed;
    setup.quadrature = c.drift_quadrature();
    return setup;
}

inline LagWindow cut_window(const ExperimentConfig& c, double eps) {
    return c.singular_cut > 0.0 ? singular_window(c.window, c.horizon, c.hurst, eps, c.singular_cut) : c.window;
}

inline MomentOptions moment_options(const ExperimentConfig& c) {
    MomentOptions o;
    o.min_paths = std::min<std::size_t>(o.min_paths, c.n_paths);
    o.bootstrap_seed = c.master_seed;
    return o;
}

inline Json fit_json(const ExponentFit& f) {
    return Json{{"slope", f.slope},   {"intercept", f.intercept}, {"r_squared", f.r_squared}, {"ci_lo", f.ci_lo},
                {"ci_hi", f.ci_hi},   {"points", f.points},       {"octaves", f.octaves},     {"flagged", f.flagged}};
}

inline void add_moment_rows(CsvTable& t, const MomentTable& m) {
    for (std::size_t l = 0; l < m.lags.size(); ++l) {
        t.add({m.m, m.lags[l].length, m.estimates[l], m.std_errors[l]});
    }
}

inline void moments(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    const SolveSetup setup = make_setup(c);
    const Quantity q = quantity_from_string(c.quantity);
    if (q != Quantity::B && q != Quantity::K && q != Quantity::XminusB) {
        throw ConfigError("moments: quantity must be B, K or X-B");
    }
    const FbmConfig cfg = c.fbm();
    const NoiseSource noise(cfg, c.master_seed);
    const LagWindow window = q == Quantity::B ? c.window : cut_window(c, c.eps);
    const auto lags = make_lags(window, cfg.n_steps, cfg.horizon);
    const std::size_t nm = c.m_values.size();
    std::vector<std::vector<std::vector<double>>> samples(nm, std::vector<std::vector<double>>(c.n_paths));
    std::vector<char> monotone(c.n_paths, 1);
    std::unique_ptr<SmoothedDrift> b;
    if (q != Quantity::B) {
        b = std::make_unique<SmoothedDrift>(setup.spec, c.eps, setup.lattice);
    }
    parallel_for(c.n_paths, [&](std::size_t p) {
        const GridPath path = noise(p);
        if (q == Quantity::B) {
            for (std::size_t k = 0; k < nm; ++k) {
                samples[k][p] = increment_power_means(
                    path.dimension, [&](std::size_t i, std::size_t comp) { return path(i, comp); }, lags,
                    c.m_values[k], path.steps());
            }
            return;
        }
        const SolutionPath sol = setup.solve(*b, c.eps, path);
        if (!sol.completed()) {
            throw BoxExitError("moments: a solution left the lattice box");
        }
        for (std::size_t i = 0; i < cfg.n_steps && monotone[p]; ++i) {
            for (std::size_t comp = 0; comp < cfg.dimension; ++comp) {
                if (sol.K(i + 1, comp) < sol.K(i, comp)) {
                    monotone[p] = 0;
                }
            }
        }
        for (std::size_t k = 0; k < nm; ++k) {
            samples[k][p] = solution_moments(sol, q, c.m_values[k], lags);
        }
    });
    const double beta = setup.spec->declared_beta;
    const double target = q == Quantity::B ? c.hurst : 1.0 + c.hurst * beta;
    CsvTable t = ctx.table({"m", "lag", "estimate", "std_error"});
    Json fits = Json::array();
    for (std::size_t k = 0; k < nm; ++k) {
        const MomentTable table = moment_table(q, c.m_values[k], lags, samples[k], moment_options(c));
        const ExponentFit fit = fit_exponent(table);
        add_moment_rows(t, table);
        Json f = fit_json(fit);
        f["m"] = c.m_values[k];
        fits.push_back(f);
        const std::string label = std::string(to_string(q)) + " slope m=" + io::format_double(c.m_values[k]);
        if (q == Quantity::B) {
            ctx.gate(label, "fBm increment scaling ||B_t - B_s||_{L^m} ~ (t-s)^H", fit.slope, target, "~",
                     std::abs(fit.slope - target) <= c.tolerance);
        } else {
            ctx.gate(label, "L^m increment bound (t-s)^{1+beta H}", fit.slope, target - c.tolerance, ">=",
                     fit.slope >= target - c.tolerance);
        }
    }
    ctx.csv("moments", t);
    if (q != Quantity::B && setup.spec->nonnegative) {
        const double fraction = static_cast<double>(std::count(monotone.begin(), monotone.end(), 1)) /
                                static_cast<double>(monotone.size());
        ctx.gate("K monotone", "componentwise monotone drift part for a nonnegative drift", fraction, 1.0, "==",
                 fraction == 1.0);
    }
    ctx.result.details = Json{{"quantity", to_string(q)}, {"target", target}, {"fits", fits},
                              {"lag_window", Json{window.level_lo, window.level_hi}}};
}

inline void regularization(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    const SolveSetup setup = make_setup(c);
    const SmoothedDrift f(setup.spec, c.eps, setup.lattice);
    const double gamma = c.gamma.value_or(setup.spec->declared_beta);
    const NoiseSource noise(c.fbm(), c.master_seed);
    const std::size_t substeps = plan_substeps(c.hurst, c.fbm().dt(), c.eps);
    CsvTable t = ctx.table({"m", "lag", "estimate", "std_error"});
    Json fits = Json::array();
    double target = 0.0;
    for (double m : c.m_values) {
        const auto r = regularization_experiment(f, gamma, c.hurst, m, noise, c.n_paths, cut_window(c, c.eps),
                                                 setup.quadrature, substeps, moment_options(c));
        target = r.target;
        add_moment_rows(t, r.table);
        Json j = fit_json(r.fit);
        j["m"] = m;
        fits.push_back(j);
        ctx.gate("averaged slope m=" + io::format_double(m),
                 "averaging bound ||int_s^t f(B_r) dr||_{L^m} <= C (t-s)^{1+H gamma}", r.fit.slope,
                 r.target - c.tolerance, ">=", r.fit.slope >= r.target - c.tolerance);
    }
    ctx.csv("regularization", t);
    ctx.result.details = Json{{"gamma", gamma}, {"target", target}, {"fits", fits}};
}

inline void sewing(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    const SolveSetup setup = make_setup(c);
    const FbmConfig cfg = c.fbm();
    const SmoothedDrift h(setup.spec, c.eps, setup.lattice);
    const NoiseSource noise(cfg, c.master_seed);
    const std::size_t substeps = plan_substeps(c.hurst, cfg.dt(), c.eps);
    std::vector<SolutionPath> ensemble(c.n_paths);
    parallel_for(c.n_paths, [&](std::size_t p) {
        ensemble[p] = setup.solve(h, c.eps, noise(p));
        if (!ensemble[p].completed()) {
            throw BoxExitError("sewing: a solution left the lattice box");
        }
    });
    SewingOptions opt;
    opt.m = c.m_values.front();
    opt.germ_substeps = substeps;
    opt.level_lo = c.window.level_lo;
    opt.level_hi = std::min(c.window.level_hi, static_cast<int>(std::log2(static_cast<double>(c.n_steps))) - 2);
    const VolterraKernel kernel(cfg);
    const SewingReport r = fit_sewing_conditions(h, ensemble, kernel, opt);

    const std::vector<int> riemann_levels{2, 3, 4, 5, 6, 7, 8};
    const double c1 = c1_norm(h.grid());
    std::vector<RiemannReport> riemann(c.n_paths);
    parallel_for(c.n_paths, [&](std::size_t p) {
        riemann[p] = riemann_convergence(h, c1, SewingPath::from(ensemble[p]), c.n_steps, riemann_levels, substeps);
    });
    CsvTable rt = ctx.table({"level", "mesh", "mean_error", "mean_bound", "fraction_holding"});
    std::size_t holding = 0;
    for (const auto& rep : riemann) {
        holding += rep.all_hold ? 1 : 0;
    }
    for (std::size_t l = 0; l < riemann_levels.size(); ++l) {
        double err = 0.0, bound = 0.0, ok = 0.0;
        for (const auto& rep : riemann) {
            err += rep.levels[l].error;
            bound += rep.levels[l].bound;
            ok += rep.levels[l].holds ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(riemann.size());
        rt.add({static_cast<double>(riemann_levels[l]), riemann.front().levels[l].mesh, err / n, bound / n, ok / n});
    }
    CsvTable t = ctx.table({"level", "lag", "samples", "max_defect", "mean_defect", "max_control", "envelope",
                            "lm_defect", "lm_germ"});
    for (const auto& row : r.remainder_table) {
        t.add({static_cast<double>(row.level), row.lag, static_cast<double>(row.samples), row.max_defect,
               row.mean_defect, row.max_control, row.envelope, row.lm_defect, row.lm_germ});
    }
    ctx.csv("sewing_remainders", t);
    ctx.csv("sewing_riemann", rt);

    const double alpha_target = 1.0 + c.hurst * (setup.spec->declared_beta - 1.0);
    const double riemann_fraction = static_cast<double>(holding) / static_cast<double>(riemann.size());
    const double checked_fraction =
        r.bound_checked ? 1.0 - static_cast<double>(r.bound_violations) / static_cast<double>(r.bound_checked) : 0.0;
    ctx.gate("alpha1", "conditional defect exponent in |t-s|^{alpha1} lambda^{beta1}", r.alpha1, alpha_target, "~",
             std::abs(r.alpha1 - alpha_target) <= c.tolerance);
    ctx.gate("beta1", "random control exponent of the conditional defect", r.beta1, 1.0, "~",
             std::abs(r.beta1 - 1.0) <= 0.15);
    ctx.gate("alpha1 + beta1", "stochastic sewing condition alpha1 + beta1 > 1", r.alpha1 + r.beta1, 1.0, ">",
             r.alpha1 + r.beta1 > 1.0);
    ctx.gate("L^m defect slope", "L^m defect exponent 1/2 + margin", r.lm_slope, 0.6, ">=", r.lm_slope >= 0.6);
    ctx.gate("conditional bound", "pathwise conditional-defect bound on every tested triple", checked_fraction, 1.0,
             "==", r.bound_checked > 0 && r.bound_violations == 0);
    ctx.gate("Riemann bound", "pathwise Riemann-sum bound c1 |Pi| lambda(0,t) at dyadic levels 2..8",
             riemann_fraction, 1.0, "==", holding == riemann.size());
    ctx.result.details = Json{{"gamma1", r.gamma1},         {"gamma2", r.gamma2},       {"alpha1", r.alpha1},
                              {"beta1", r.beta1},           {"lm_slope", r.lm_slope},   {"germ_slope", r.germ_slope},
                              {"bound_checked", r.bound_checked}, {"bound_violations", r.bound_violations},
                              {"degenerate", r.degenerate}, {"germ_substeps", substeps},
                              {"quadrature", to_string(setup.quadrature)}};
}

inline std::vector<int> levels_of(const ScheduleConfig& s) {
    std::vector<int> out;
    for (int n = s.first; n <= s.last; ++n) {
        out.push_back(n);
    }
    return out;
}

inline void tightness(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    if (c.schedule.base != 4.0) {
        throw ConfigError("tightness: the schedule base must be 4 (eps_n = 4^{-n})");
    }
    const SolveSetup setup = make_setup(c);
    TightnessOptions opt;
    opt.levels = levels_of(c.schedule);
    opt.n_paths = c.n_paths;
    opt.pairs = LagWindow{0, static_cast<int>(std::log2(static_cast<double>(c.n_steps)))};
    opt.singular_cut = c.singular_cut;
    const TightnessReport r = tightness_experiment(setup, opt);
    CsvTable t = ctx.table({"level", "eps", "M", "exceedance"});
    for (std::size_t l = 0; l < r.levels.size(); ++l) {
        for (std::size_t k = 0; k < r.M_grid.size(); ++k) {
            t.add({static_cast<double>(r.levels[l]), r.scales[l], r.M_grid[k], r.exceedance[l][k]});
        }
    }
    ctx.csv("tightness", t);
    ctx.gate("tightness slope", "modulus exceedance P(K not in A_M) <= C/M", r.worst_slope, opt.slope_max, "<=",
             r.worst_slope <= opt.slope_max);
    ctx.gate("tightness uniformity", "tightness of the approximating drift parts", r.uniformity_ratio,
             opt.uniformity_factor, "<=", r.uniformity_ratio <= opt.uniformity_factor && r.monotone);
    ctx.gate("box exits", "solutions stay inside the lattice box", static_cast<double>(r.box_exits), 0.0, "==",
             r.box_exits == 0);
    ctx.result.details = Json{{"exponent", r.exponent},       {"slopes", r.slopes},
                              {"reference_M", r.reference_M}, {"pairs", Json{r.pairs.level_lo, r.pairs.level_hi}},
                              {"monotone", r.monotone}};
}

inline void add_stability_rows(CsvTable& t, const StabilityReport& r) {
    for (std::size_t l = 0; l < r.scales.size(); ++l) {
        t.add({static_cast<double>(l), r.scales[l], r.a1[l], r.a2[l], r.a3[l]});
    }
}

inline Json stability_json(const StabilityReport& r) {
    return Json{{"a1_slope", r.a1_slope},       {"a2_slope", r.a2_slope}, {"ks", r.ks},
                {"ks_critical", r.ks_critical}, {"wasserstein", r.wasserstein}, {"ks_paths", r.ks_paths}};
}

inline void stability(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    const SolveSetup setup = make_setup(c);
    StabilityOptions opt;
    opt.family_a = c.schedule.build();
    opt.family_b = c.schedule_b.build();
    opt.diagnostic_paths = c.n_paths;
    opt.ks_paths = c.ks_paths;
    const StabilityReport r = stability_experiment(setup, opt);
    CsvTable t = ctx.table({"level", "eps", "a1", "a2", "a3"});
    add_stability_rows(t, r);
    ctx.csv("stability", t);
    ctx.gate("stability KS", "mollifier independence of the limit law", r.ks, r.ks_critical, "<",
             r.ks < r.ks_critical);
    ctx.gate("stability decay", "A1 + A2 + A3 decomposition decays along the diagonal", r.a2_slope, 0.0, ">",
             r.decays);
    ctx.result.details = stability_json(r);
}

inline void flagship(Context& ctx) {
    const ExperimentConfig& c = ctx.config;
    FlagshipOptions o = FlagshipOptions::defaults(c.dimension);
    o.n_steps = c.n_steps;
    o.lattice = c.lattice();
    o.master_seed = c.master_seed;
    o.tolerance = c.tolerance;
    o.moment_eps = c.eps;
    o.window = c.window;
    o.moment_paths = c.n_paths;
    o.ks_paths = c.ks_paths;
    o.tightness_lo = c.schedule.first;
    o.tightness_hi = c.schedule.last;
    o.stability_lo = c.schedule_b.first;
    o.stability_hi = c.schedule_b.last;
    const FlagshipReport r = measure_flagship(c.dimension, c.hurst, o);
    CsvTable mt = ctx.table({"m", "lag", "estimate", "std_error"});
    add_moment_rows(mt, r.moments);
    ctx.csv("flagship_moments", mt);
    CsvTable tt = ctx.table({"level", "eps", "M", "exceedance"});
    for (std::size_t l = 0; l < r.tightness.levels.size(); ++l) {
        for (std::size_t k = 0; k < r.tightness.M_grid.size(); ++k) {
            tt.add({static_cast<double>(r.tightness.levels[l]), r.tightness.scales[l], r.tightness.M_grid[k],
                    r.tightness.exceedance[l][k]});
        }
    }
    ctx.csv("flagship_tightness", tt);
    CsvTable st = ctx.table({"level", "eps", "a1", "a2", "a3"});
    add_stability_rows(st, r.stability);
    ctx.csv("flagship_stability", st);
    ctx.result.gates = r.gates;
    ctx.result.details = Json{{"dimension", r.dimension},
                              {"hurst", r.hurst},
                              {"beta", r.beta},
                              {"moment_fit", fit_json(r.moment_fit)},
                              {"tightness_slopes", r.tightness.slopes},
                              {"stability", stability_json(r.stability)}};
}

} // namespace runner

/// Runs the configured suite into `out_dir`: config.json, <suite>*.csv,
/// <suite>_report.json and manifest.json. Configuration errors propagate;
/// numerical failures are recorded in the manifest after partial outputs are kept.
inline RunManifest run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
    config.validate();
    RunManifest manifest;
    manifest.name = config.name;
    manifest.suite = to_string(config.suite);
    manifest.config_hash = config_hash(config);
    manifest.master_seed = config.master_seed;
    manifest.code_version = code_version();
    manifest.started = utc_timestamp();
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const std::string config_file = (dir / "config.json").string();
    io::write_text(config_file, serialize_config(config));

    SuiteResult result;
    runner::Context ctx{config, OutputHeader{manifest.config_hash, config.master_seed}, dir, result};
    try {
        switch (config.suite) {
        case Suite::Moments: runner::moments(ctx); break;
        case Suite::Regularization: runner::regularization(ctx); break;
        case Suite::Sewing: runner::sewing(ctx); break;
        case Suite::Tightness: runner::tightness(ctx); break;
        case Suite::Stability: runner::stability(ctx); break;
        case Suite::Flagship: runner::flagship(ctx); break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        manifest.error = e.what();
    }
    const std::string report_file = (dir / (manifest.suite + "_report.json")).string();
    Json gates = Json::array();
    for (const Gate& g : result.gates) {
        gates.push_back(to_json(g));
    }
    const bool passed = manifest.error.empty() && !result.gates.empty() && result.passed();
    Json report = io::header_json(ctx.header);
    report["name"] = config.name;
    report["suite"] = manifest.suite;
    report["gates"] = gates;
    report["passes"] = passed;
    report["details"] = result.details;
    if (!manifest.error.empty()) {
        report["error"] = manifest.error;
    }
    io::write_json(report_file, report);

    manifest.outputs["config"] = {config_file};
    manifest.outputs[manifest.suite] = result.files;
    manifest.outputs[manifest.suite].push_back(report_file);
    manifest.gates_total = result.gates.size();
    manifest.gates_failed = static_cast<std::size_t>(
        std::count_if(result.gates.begin(), result.gates.end(), [](const Gate& g) { return !g.passed; }));
    manifest.passed = passed;
    manifest.finished = utc_timestamp();
    io::write_json((dir / "manifest.json").string(), manifest.to_json());
    return manifest;
}

/// Human-readable table of a JSON report, using the stored anchors verbatim.
inline std::string render_report(const Json& report) {
    if (!report.is_object() || !report.contains("gates") || !report.at("gates").is_array()) {
        throw ConfigError("report: not a suite report (no 'gates' array)");
    }
    std::vector<Gate> gates;
    for (const Json& g : report.at("gates")) {
        gates.push_back(gate_from_json(g));
    }
    std::size_t wn = 4;
    for (const Gate& g : gates) {
        wn = std::max(wn, g.name.size());
    }
    std::ostringstream out;
    out << report.value("name", std::string("?")) << " [" << report.value("suite", std::string("?"))
        << "] config_hash=" << report.value("config_hash", std::string("?"))
        << " master_seed=" << report.value("master_seed", std::uint64_t{0}) << "\n";
    auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(w, s.size()), ' ');
        return s;
    };
    out << pad("gate", wn) << "  " << pad("value", 12) << "  " << pad("target", 16) << "  " << pad("result", 6)
        << "  anchor\n";
    char value[32], target[32];
    for (const Gate& g : gates) {
        std::snprintf(value, sizeof value, "%.6g", g.value);
        std::snprintf(target, sizeof target, "%.6g", g.target);
        out << pad(g.name, wn) << "  " << pad(value, 12) << "  " << pad(g.relation + " " + target, 16) << "  "
            << pad(g.passed ? "PASS" : "FAIL", 6) << "  " << g.anchor << "\n";
    }
    if (report.contains("error")) {
        out << "error: " << report.at("error").get<std::string>() << "\n";
    }
    out << "overall: " << (report.value("passes", false) ? "PASS" : "FAIL") << "\n";
    return out.str();
}

} // namespace fbmlab
