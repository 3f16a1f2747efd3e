#include "fbmlab/config.hpp"
#include "fbmlab/io.hpp"
#include "fbmlab/stats.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <string>

using namespace fbmlab;

namespace {

struct Result {
    int code = -1;
    std::string out;  ///< stdout
    std::string err;  ///< stderr
};

std::filesystem::path work_dir() {
    static const auto dir = [] {
        const auto d = std::filesystem::temp_directory_path() / "fbmlab_test_cli";
        std::filesystem::remove_all(d);
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir;
}

Result cli(const std::string& args, const std::string& env = "") {
    const auto dir = work_dir();
    const std::string err_file = (dir / "stderr.txt").string();
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" + FBMLAB_CLI_PATH + "' " + args + " 2>'" +
                            err_file + "'";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) {
        return r;
    }
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) {
        r.out.append(buf, n);
    }
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = io::read_text(err_file);
    return r;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

bool single_line(const std::string& s) { return !s.empty() && s.find('\n') == s.size() - 1; }

} // namespace

TEST(Cli, SampleFbmWritesANormalContainer) {
    const Result r = cli("sample-fbm --hurst 0.5 --steps 1024 --seed 7 --paths 4 -o bm");
    ASSERT_EQ(r.code, 0) << r.err;
    const PathFile file = read_paths(path("bm"));
    ASSERT_EQ(file.paths.size(), 4u);
    EXPECT_EQ(file.header.master_seed, 7u);
    EXPECT_EQ(file.paths[0].lineage, (SeedLineage{7, 0}));
    // increments / sqrt(dt) should be standard normal
    std::vector<double> z;
    const double scale = std::sqrt(1024.0);
    for (const auto& p : file.paths) {
        for (std::size_t i = 0; i < p.steps(); ++i) {
            z.push_back((p(i + 1, 0) - p(i, 0)) * scale);
        }
    }
    EXPECT_LT(stats::ks_statistic_normal(z), stats::ks_critical_one_sample(z.size(), 0.01));
}

TEST(Cli, EstimateRecoversTheHurstIndex) {
    ASSERT_EQ(cli("sample-fbm --hurst 0.3 --steps 1024 --seed 3 --paths 500 -o b03").code, 0);
    const Result r = cli("estimate --paths b03 --quantity B --m 2 -o est.csv");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto at = r.out.find("slope=");
    ASSERT_NE(at, std::string::npos) << r.out;
    EXPECT_NEAR(std::stod(r.out.substr(at + 6)), 0.3, 0.02);
    const CsvTable t = read_csv(path("est.csv"));
    EXPECT_EQ(t.header.master_seed, 3u);
    EXPECT_EQ(t.rows.size(), 8u);
}

TEST(Cli, MollifyMatchesTheHeatKernel) {
    const Result r = cli("mollify --drift dirac --eps 0.01 --half-width 2 --points 256 -o g");
    ASSERT_EQ(r.code, 0) << r.err;
    const GridFile g = read_grid_function(path("g"));
    double worst = 0.0;
    for (std::size_t k = 0; k < 256; ++k) {
        const double x = g.function.lattice.coordinate(k);
        const double exact = std::exp(-x * x / 0.02) / std::sqrt(2.0 * M_PI * 0.01);
        worst = std::max(worst, std::abs(g.function.values[k] - exact));
    }
    EXPECT_LT(worst, 1e-9);
}

TEST(Cli, SolveSewCheckAndReport) {
    ASSERT_EQ(cli("sample-fbm --hurst 0.3 --steps 512 --seed 1 --paths 40 -o noise").code, 0);
    Result r = cli("solve --noise noise --eps 1e-3 --quadrature segment -o sol");
    ASSERT_EQ(r.code, 0) << r.err;
    const PathFile k = read_paths(path("sol_K"));
    EXPECT_EQ(k.paths.front().kind, PathKind::K);
    for (const auto& p : k.paths) {
        for (std::size_t i = 0; i < p.steps(); ++i) {
            ASSERT_GE(p(i + 1, 0), p(i, 0));
        }
    }
    r = cli("sew-check --solution sol --eps 1e-3 --level-hi 7 -o sew.json");
    EXPECT_TRUE(r.code == 0 || r.code == 1) << r.err;
    EXPECT_NE(r.out.find("Riemann bound"), std::string::npos);
    r = cli("report sew.json");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("stochastic sewing condition alpha1 + beta1 > 1"), std::string::npos) << r.out;
}

TEST(Cli, RunRejectsTheRegularityGateWithExitTwo) {
    io::write_text(path("bad.json"),
                   R"({"name": "bad", "H": 0.3, "drift": {"type": "dirac", "weight": [1.0], "beta": -3}})");
    const Result r = cli("run bad.json -o bad_out");
    EXPECT_EQ(r.code, 2);
    EXPECT_TRUE(single_line(r.err)) << r.err;
    EXPECT_NE(r.err.find("beta=-3 requires H<1/6, got H=0.3"), std::string::npos) << r.err;
}

TEST(Cli, MalformedInputsGiveOneLineDiagnostics) {
    io::write_text(path("broken.json"), "{\"name\": ");
    for (const char* args : {"run broken.json", "run missing.json", "sample-fbm --hurst 0.8 -o x", "estimate --paths nope",
                             "report broken.json", "frobnicate", "sample-fbm --steps notanumber -o x"}) {
        const Result r = cli(args);
        EXPECT_NE(r.code, 0) << args;
        EXPECT_TRUE(single_line(r.err)) << args << ": " << r.err;
    }
}

TEST(Cli, RunExitCodesAndDeterminismAcrossWorkers) {
    io::write_text(path("ok.json"), R"({"name": "ok", "suite": "moments", "quantity": "B", "H": 0.25,
        "n_steps": 256, "lag_window": {"level_lo": 2, "level_hi": 8}, "n_paths": 200, "master_seed": 4})");
    Result a = cli("run ok.json -o run1", "FBMLAB_WORKERS=1");
    ASSERT_EQ(a.code, 0) << a.err;
    Result b = cli("run ok.json -o run2", "FBMLAB_WORKERS=3");
    ASSERT_EQ(b.code, 0) << b.err;
    EXPECT_EQ(io::read_text(path("run1/moments.csv")), io::read_text(path("run2/moments.csv")));
    // an unreachable tolerance makes the gate fail: exit 1, outputs still written
    io::write_text(path("fail.json"), R"({"name": "fail", "suite": "moments", "quantity": "B", "H": 0.25,
        "n_steps": 256, "lag_window": {"level_lo": 2, "level_hi": 8}, "n_paths": 200, "tolerance": 0})");
    const Result f = cli("run fail.json -o runf");
    EXPECT_EQ(f.code, 1);
    EXPECT_TRUE(std::filesystem::exists(path("runf/moments.csv")));
    EXPECT_FALSE(io::read_json(path("runf/manifest.json")).at("summary").at("passed").get<bool>());
}

TEST(Cli, AggregateRefusesMismatchedHashes) {
    ASSERT_EQ(cli("sample-fbm --hurst 0.3 --steps 1024 --seed 3 --paths 50 -o b03a").code, 0);
    ASSERT_EQ(cli("estimate --paths b03a --quantity B -o e1.csv").code, 0);
    ASSERT_EQ(cli("sample-fbm --hurst 0.3 --steps 1024 --seed 4 --paths 50 -o b04").code, 0);
    ASSERT_EQ(cli("estimate --paths b04 --quantity B -o e2.csv").code, 0);
    EXPECT_EQ(cli("aggregate e1.csv e1.csv -o same.csv").code, 0);
    const Result r = cli("aggregate e1.csv e2.csv -o mixed.csv");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("config hash mismatch"), std::string::npos) << r.err;
}
