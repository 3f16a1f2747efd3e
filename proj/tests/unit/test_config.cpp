#include "fbmlab/config.hpp"

#include <gtest/gtest.h>

#include <string>

using namespace fbmlab;

namespace {

ExperimentConfig sample_config() {
    ExperimentConfig c;
    c.name = "roundtrip";
    c.suite = Suite::Stability;
    c.hurst = 0.3;
    c.dimension = 2;
    c.n_steps = 512;
    c.half_width = 6.0;
    c.lattice_points = 256;
    c.x0 = {0.25, -0.5};
    c.drift.type = "atoms";
    c.drift.atoms = {Atom{{0.0, 0.0}, {1.0, 0.5}}, Atom{{1.0, -1.0}, {0.25, 2.0}}};
    c.eps = 1e-3;
    c.schedule = ScheduleConfig{"gaussian", 4.0, 2, 5};
    c.schedule_b = ScheduleConfig{"bump", 4.0, 2, 5};
    c.m_values = {2.0, 4.0};
    c.window = LagWindow{2, 8};
    c.n_paths = 321;
    c.ks_paths = 654;
    c.master_seed = 987654321987ull;
    c.quantity = "X-B";
    c.quadrature = "segment";
    c.tolerance = 0.05;
    return c;
}

} // namespace

TEST(Config, SerializeParseIsIdentity) {
    const ExperimentConfig c = sample_config();
    const std::string text = serialize_config(c);
    const ExperimentConfig back = parse_config(text);
    EXPECT_EQ(serialize_config(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(back.master_seed, c.master_seed);
    EXPECT_EQ(back.drift.atoms.size(), 2u);
    EXPECT_EQ(back.drift.atoms[1].weight, c.drift.atoms[1].weight);
}

TEST(Config, DefaultsAreWrittenOut) {
    const ExperimentConfig c = parse_config(R"({"name": "minimal"})");
    const std::string text = serialize_config(c);
    for (const char* key : {"\"H\"", "\"n_steps\"", "\"schedule_b\"", "\"quadrature\"", "\"master_seed\"", "\"x0\""}) {
        EXPECT_NE(text.find(key), std::string::npos) << key;
    }
    EXPECT_EQ(serialize_config(parse_config(text)), text);
}

TEST(Config, EveryDriftTypeRoundTrips) {
    for (const char* drift : {R"({"type": "dirac", "location": [0.5], "weight": [2.0]})",
                              R"({"type": "constant", "value": [1.5]})",
                              R"({"type": "tanh", "scale": 0.25, "beta": 1.0})",
                              R"({"type": "atoms", "atoms": [{"location": [0.0], "weight": [1.0]}]})"}) {
        const std::string text = std::string(R"({"name": "d", "drift": )") + drift + "}";
        const ExperimentConfig c = parse_config(text);
        c.validate();
        EXPECT_EQ(serialize_config(parse_config(serialize_config(c))), serialize_config(c)) << drift;
    }
}

TEST(Config, HashIsFnv1aOfCanonicalDump) {
    // FNV-1a 64 reference values
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a("foobar"), 0x85944171f73967e8ull);
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
    ExperimentConfig a = sample_config();
    ExperimentConfig b = a;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.master_seed += 1;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a), hex64(fnv1a(to_json(a).dump())));
}

TEST(Config, KeyOrderDoesNotChangeTheHash) {
    const auto a = parse_config(R"({"name": "k", "H": 0.25, "n_paths": 10})");
    const auto b = parse_config(R"({"n_paths": 10, "H": 0.25, "name": "k"})");
    EXPECT_EQ(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeysAndBadTypesAreRejected) {
    EXPECT_THROW(parse_config(R"({"name": "x", "hurst": 0.3})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"lattice": {"L": 1, "pts": 64}})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"H": "0.3"})"), ConfigError);
    EXPECT_THROW(parse_config(R"({"suite": "everything"})"), ConfigError);
    EXPECT_THROW(parse_config("{not json"), ConfigError);
    EXPECT_THROW(parse_config(R"({"drift": {"type": "atoms"}})"), ConfigError);
}

TEST(Config, RegularityGateNamesTheHypothesis) {
    ExperimentConfig c;
    c.hurst = 0.3;
    c.drift.beta = -3.0;
    try {
        c.validate();
        FAIL() << "expected a ConfigError";
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("beta > -1/(2H)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("beta=-3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("H<1/6"), std::string::npos) << msg;
        EXPECT_NE(msg.find("H=0.3"), std::string::npos) << msg;
    }
    // -1 > -1/(2 * 0.3) passes
    c.drift.beta.reset();
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, HurstAboveOneHalfIsRejected) {
    ExperimentConfig c;
    c.hurst = 0.6;
    EXPECT_THROW(c.validate(), ConfigError);
    c.hurst = 0.5;
    c.drift.type = "constant";
    c.drift.value = {1.0};
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, FlagshipGate) {
    ExperimentConfig c;
    c.suite = Suite::Flagship;
    c.dimension = 2;
    c.drift.atoms = {Atom{{0.0, 0.0}, {1.0, 1.0}}};
    c.half_width = 6.0;
    c.lattice_points = 256;
    c.hurst = 0.25;  // = 1/(2d)
    EXPECT_THROW(c.validate(), ConfigError);
    c.hurst = 0.2;
    EXPECT_NO_THROW(c.validate());
    c.drift.type = "constant";
    c.drift.value = {1.0, 1.0};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, RegularizationGammaGate) {
    ExperimentConfig c;
    c.suite = Suite::Regularization;
    c.hurst = 0.3;
    c.gamma = -1.0;
    EXPECT_NO_THROW(c.validate());
    c.gamma = -1.0 / 0.6;
    EXPECT_THROW(c.validate(), ConfigError);
    c.gamma = -2.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, ShapeChecks) {
    ExperimentConfig c;
    c.x0 = {0.0, 0.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.m_values = {1.0};
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.lattice_points = 100;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.window = LagWindow{3, 12};  // finer than the grid
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.quadrature = "simpson";
    EXPECT_THROW(c.validate(), ConfigError);
    c = ExperimentConfig{};
    c.suite = Suite::Stability;
    c.schedule_b.last = c.schedule_b.first + 1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, QuadratureDefaultsPerSuite) {
    ExperimentConfig c;
    c.suite = Suite::Sewing;
    EXPECT_EQ(c.drift_quadrature(), DriftQuadrature::Segment);
    c.suite = Suite::Tightness;
    EXPECT_EQ(c.drift_quadrature(), DriftQuadrature::Bridge);
    c.quadrature = "segment";
    EXPECT_EQ(c.drift_quadrature(), DriftQuadrature::Segment);
}

TEST(Config, BuildsTheDeclaredDrift) {
    ExperimentConfig c;
    c.dimension = 2;
    c.drift.atoms = {Atom{{0.0, 0.0}, {1.0, 1.0}}, Atom{{1.0, 0.0}, {0.5, 0.5}}};
    c.drift.type = "atoms";
    const DriftSpec spec = c.drift_spec();
    EXPECT_TRUE(spec.atomic());
    EXPECT_DOUBLE_EQ(spec.declared_beta, -2.0);
    EXPECT_EQ(spec.total_weight(), (std::vector<double>{1.5, 1.5}));
    c.drift.beta = -0.5;
    EXPECT_DOUBLE_EQ(c.drift_spec().declared_beta, -0.5);
    const MollifierSchedule s = ScheduleConfig{"bump", 2.0, 1, 3}.build();
    EXPECT_EQ(s.kernel, MollifierKernel::CompactBump);
    EXPECT_EQ(s.scales, (std::vector<double>{0.5, 0.25, 0.125}));
}
