#include "fbmlab/io.hpp"
#include "fbmlab/runner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

using namespace fbmlab;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("fbmlab_test_io_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST(PathContainer, RoundTripIsBitExact) {
    const auto dir = scratch("paths");
    const FbmConfig cfg{0.3, 2.0, 64, 2};
    std::vector<GridPath> paths;
    for (std::uint64_t p = 0; p < 3; ++p) {
        paths.push_back(sample_fbm(cfg, {11, p}));
    }
    const OutputHeader header{"00000000deadbeef", 11};
    const std::string base = (dir / "b").string();
    write_paths(base, paths, header);
    EXPECT_EQ(std::filesystem::file_size(base + ".bin"), 3 * 65 * 2 * sizeof(double));
    const PathFile back = read_paths(base);
    EXPECT_EQ(back.header, header);
    ASSERT_EQ(back.paths.size(), 3u);
    for (std::size_t p = 0; p < 3; ++p) {
        EXPECT_EQ(back.paths[p].values, paths[p].values);
        EXPECT_EQ(back.paths[p].times, paths[p].times);
        EXPECT_EQ(back.paths[p].lineage, paths[p].lineage);
        EXPECT_EQ(back.paths[p].kind, PathKind::B);
        EXPECT_EQ(back.paths[p].hurst, 0.3);
        EXPECT_EQ(back.paths[p].dimension, 2u);
    }
}

TEST(PathContainer, TruncatedBinaryIsRejected) {
    const auto dir = scratch("truncated");
    const std::string base = (dir / "b").string();
    write_paths(base, {sample_fbm(FbmConfig{0.4, 1.0, 32, 1}, {1, 0})}, OutputHeader{"h", 1});
    std::filesystem::resize_file(base + ".bin", 8);
    EXPECT_THROW(read_paths(base), ConfigError);
    EXPECT_THROW(read_paths((dir / "missing").string()), ConfigError);
}

TEST(GridContainer, RoundTrip) {
    const auto dir = scratch("grid");
    const SpatialLattice lattice{1, 2.0, 64};
    const GridFunction f = GridFunction::sample(lattice, 1, [](std::span<const double> x, std::span<double> out) {
        out[0] = std::exp(-x[0] * x[0]);
    });
    const std::string base = (dir / "g").string();
    write_grid_function(base, f, OutputHeader{"abc", 3}, Json{{"eps", 0.01}});
    const GridFile back = read_grid_function(base);
    EXPECT_EQ(back.function.values, f.values);
    EXPECT_EQ(back.function.lattice.points, 64u);
    EXPECT_EQ(back.header.master_seed, 3u);
    EXPECT_DOUBLE_EQ(back.meta.at("eps").get<double>(), 0.01);
}

TEST(Csv, SeventeenDigitsRoundTripExactly) {
    const auto dir = scratch("csv");
    CsvTable t{OutputHeader{"0123456789abcdef", 42}, {"x", "y"}, {}};
    t.add({0.1, 1.0 / 3.0});
    t.add({std::numeric_limits<double>::min(), -std::numeric_limits<double>::max()});
    t.add({std::nextafter(1.0, 2.0), 1e-300});
    const std::string path = (dir / "t.csv").string();
    write_csv(path, t);
    const std::string text = io::read_text(path);
    EXPECT_EQ(text.rfind("# config_hash=0123456789abcdef master_seed=42\nx,y\n", 0), 0u);
    EXPECT_NE(text.find("0.10000000000000001"), std::string::npos);
    const CsvTable back = read_csv(path);
    EXPECT_EQ(back.header, t.header);
    EXPECT_EQ(back.columns, t.columns);
    EXPECT_EQ(back.rows, t.rows);
    EXPECT_EQ(render_csv(back), text);
}

TEST(Csv, MalformedFilesAreRejected) {
    const auto dir = scratch("badcsv");
    const std::string path = (dir / "bad.csv").string();
    io::write_text(path, "x,y\n1,2\n");
    EXPECT_THROW(read_csv(path), ConfigError);
    io::write_text(path, "# config_hash=a master_seed=1\nx,y\n1,zz\n");
    EXPECT_THROW(read_csv(path), ConfigError);
    io::write_text(path, "# config_hash=a master_seed=1\nx,y\n1\n");
    EXPECT_THROW(read_csv(path), ConfigError);
}

TEST(Csv, AggregationRefusesMismatchedHashes) {
    CsvTable a{OutputHeader{"aaaa", 1}, {"x"}, {{1.0}}};
    CsvTable b{OutputHeader{"aaaa", 1}, {"x"}, {{2.0}}};
    const CsvTable merged = aggregate_csv({a, b});
    EXPECT_EQ(merged.rows, (std::vector<std::vector<double>>{{1.0}, {2.0}}));
    CsvTable c{OutputHeader{"bbbb", 1}, {"x"}, {{3.0}}};
    EXPECT_THROW(aggregate_csv({a, c}), ConfigError);
    CsvTable d{OutputHeader{"aaaa", 2}, {"x"}, {{3.0}}};
    EXPECT_THROW(aggregate_csv({a, d}), ConfigError);
    CsvTable e{OutputHeader{"aaaa", 1}, {"y"}, {{3.0}}};
    EXPECT_THROW(aggregate_csv({a, e}), ConfigError);
}

TEST(Report, RendersStoredAnchorsVerbatim) {
    Json report{{"name", "demo"},
                {"suite", "tightness"},
                {"config_hash", "ff"},
                {"master_seed", 5},
                {"passes", false},
                {"gates", Json::array({to_json(Gate{"g1", "an anchor string kept as is", 0.5, 1.0, "<=", true}),
                                       to_json(Gate{"g2", "second anchor", 4.0, 3.0, "<=", false})})}};
    const std::string table = render_report(report);
    EXPECT_NE(table.find("an anchor string kept as is"), std::string::npos);
    EXPECT_NE(table.find("second anchor"), std::string::npos);
    EXPECT_NE(table.find("FAIL"), std::string::npos);
    EXPECT_NE(table.find("overall: FAIL"), std::string::npos);
    EXPECT_THROW(render_report(Json{{"name", "x"}}), ConfigError);
}

TEST(Runner, RerunGivesIdenticalCsvAndRecordsManifest) {
    const auto dir = scratch("runner");
    ExperimentConfig c;
    c.name = "small";
    c.suite = Suite::Moments;
    c.hurst = 0.4;
    c.n_steps = 256;
    c.quantity = "B";
    c.window = LagWindow{2, 8};
    c.n_paths = 300;
    c.master_seed = 9;
    const RunManifest a = run_experiment(c, (dir / "a").string());
    const RunManifest b = run_experiment(c, (dir / "b").string());
    EXPECT_TRUE(a.passed);
    EXPECT_EQ(a.config_hash, config_hash(c));
    EXPECT_EQ(io::read_text((dir / "a" / "moments.csv").string()), io::read_text((dir / "b" / "moments.csv").string()));
    const Json m = io::read_json((dir / "a" / "manifest.json").string());
    EXPECT_EQ(m.at("config_hash").get<std::string>(), a.config_hash);
    EXPECT_TRUE(m.at("summary").at("passed").get<bool>());
    // the stored config reproduces the hash
    const ExperimentConfig stored = load_config((dir / "a" / "config.json").string());
    EXPECT_EQ(config_hash(stored), a.config_hash);
}

TEST(Runner, ConfigErrorsPropagate) {
    ExperimentConfig c;
    c.hurst = 0.3;
    c.drift.beta = -3.0;
    EXPECT_THROW(run_experiment(c, scratch("reject").string()), ConfigError);
}
