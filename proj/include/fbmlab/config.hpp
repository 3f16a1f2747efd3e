#pragma once

// Declarative experiment configuration: one JSON tree per run. Serialization
// is canonical (sorted keys, every field present), so the FNV-1a hash of the
// dump identifies the experiment.

#include "fbmlab/drift.hpp"
#include "fbmlab/errors.hpp"
#include "fbmlab/fbm.hpp"
#include "fbmlab/lattice.hpp"
#include "fbmlab/mc.hpp"
#include "fbmlab/solve.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fbmlab {

using Json = nlohmann::json;

enum class Suite { Moments, Regularization, Sewing, Tightness, Stability, Flagship };

inline const char* to_string(Suite s) {
    switch (s) {
    case Suite::Moments: return "moments";
    case Suite::Regularization: return "regularization";
    case Suite::Sewing: return "sewing";
    case Suite::Tightness: return "tightness";
    case Suite::Stability: return "stability";
    case Suite::Flagship: return "flagship";
    }
    return "?";
}

inline Suite suite_from_string(const std::string& s) {
    for (Suite v : {Suite::Moments, Suite::Regularization, Suite::Sewing, Suite::Tightness, Suite::Stability,
                    Suite::Flagship}) {
        if (s == to_string(v)) {
            return v;
        }
    }
    throw ConfigError("unknown suite '" + s +
                      "' (expected moments, regularization, sewing, tightness, stability or flagship)");
}

/// Drift as written in a config: dirac, atoms, constant or tanh.
struct DriftConfig {
    std::string type = "dirac";
    std::vector<Atom> atoms;          ///< dirac: one atom; atoms: the list
    std::vector<double> value;        ///< constant
    double scale = 1.0;               ///< tanh: b_c(x) = tanh(x_c / scale)
    std::optional<double> beta;       ///< overrides the declared regularity

    /// An empty dirac is the unit-weight atom at the origin.
    DriftConfig resolved(std::size_t d) const {
        DriftConfig out = *this;
        if (type == "dirac" && atoms.empty()) {
            out.atoms = {Atom{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)}};
        }
        return out;
    }

    DriftSpec build(std::size_t d) const {
        if (type == "dirac" && atoms.empty()) {
            return resolved(d).build(d);
        }
        DriftSpec spec;
        if (type == "dirac" || type == "atoms") {
            if (atoms.empty()) {
                throw ConfigError("drift: " + type + " needs at least one atom");
            }
            if (type == "dirac" && atoms.size() != 1) {
                throw ConfigError("drift: dirac takes exactly one atom");
            }
            for (const Atom& a : atoms) {
                if (a.location.size() != d || a.weight.size() != d) {
                    throw ConfigError("drift: atom location and weight need " + std::to_string(d) + " entries");
                }
            }
            spec = DriftSpec::atoms(d, atoms);
        } else if (type == "constant") {
            if (value.size() != d) {
                throw ConfigError("drift: constant value needs " + std::to_string(d) + " entries");
            }
            spec = DriftSpec::constant(value);
        } else if (type == "tanh") {
            if (!(scale > 0.0)) {
                throw ConfigError("drift: tanh scale must be positive");
            }
            const double s = scale;
            spec = DriftSpec::smooth_function(
                d, "tanh",
                [s](std::span<const double> x, std::span<double> out) {
                    for (std::size_t c = 0; c < out.size(); ++c) {
                        out[c] = std::tanh(x[c] / s);
                    }
                },
                false);
        } else {
            throw ConfigError("drift: unknown type '" + type + "' (expected dirac, atoms, constant or tanh)");
        }
        if (beta) {
            spec.declared_beta = *beta;
        }
        return spec;
    }
};

/// eps_n = base^{-n}, n = first..last.
struct ScheduleConfig {
    std::string kernel = "gaussian";
    double base = 4.0;
    int first = 4;
    int last = 10;

    MollifierSchedule build() const {
        if (!(base > 1.0) || last < first) {
            throw ConfigError("schedule: need base > 1 and first <= last");
        }
        return MollifierSchedule::geometric(base, first, last, mollifier_from_string(kernel));
    }
};

struct ExperimentConfig {
    std::string name = "experiment";
    Suite suite = Suite::Moments;
    double hurst = 0.3;
    std::size_t dimension = 1;
    double horizon = 1.0;
    std::size_t n_steps = 1024;
    double half_width = 20.0;
    std::size_t lattice_points = 16384;
    std::vector<double> x0;           ///< empty: the origin
    DriftConfig drift;
    double eps = 1e-4;                ///< mollification scale of moments, regularization, sewing
    ScheduleConfig schedule;          ///< tightness levels; stability family A
    ScheduleConfig schedule_b{"bump", 4.0, 4, 10};
    std::vector<double> m_values{2.0};
    LagWindow window{3, 10};
    double singular_cut = 10.0;       ///< lags below cut * eps^{1/(2H)} are dropped; 0 keeps all
    std::size_t n_paths = 10000;
    std::size_t ks_paths = 10000;
    std::uint64_t master_seed = 1;
    std::string quantity = "K";       ///< moments: B, K or X-B
    std::optional<double> gamma;      ///< regularization: defaults to the drift's beta
    std::optional<std::string> quadrature;  ///< segment or bridge; default per suite
    double tolerance = 0.1;

    FbmConfig fbm() const { return FbmConfig{hurst, horizon, n_steps, dimension}; }
    SpatialLattice lattice() const { return SpatialLattice{dimension, half_width, lattice_points}; }
    DriftSpec drift_spec() const { return drift.build(dimension); }
    std::vector<double> start() const { return x0.empty() ? std::vector<double>(dimension, 0.0) : x0; }

    /// The sewing suite was calibrated on the segment quadrature; the others use the bridge.
    DriftQuadrature drift_quadrature() const {
        if (quadrature) {
            return drift_quadrature_from_string(*quadrature);
        }
        return suite == Suite::Sewing ? DriftQuadrature::Segment : DriftQuadrature::Bridge;
    }

    /// Shape checks and the hypothesis gates; throws ConfigError.
    void validate() const {
        if (name.empty()) {
            throw ConfigError("config: name must not be empty");
        }
        if (!(hurst > 0.0 && hurst <= 0.5)) {
            std::ostringstream msg;
            msg << "config: H must lie in (0, 1/2], got H=" << hurst;
            throw ConfigError(msg.str());
        }
        fbm().validate();
        lattice().validate();
        if (!x0.empty() && x0.size() != dimension) {
            throw ConfigError("config: x0 needs " + std::to_string(dimension) + " entries");
        }
        if (!(eps > 0.0)) {
            throw ConfigError("config: eps must be positive");
        }
        if (m_values.empty()) {
            throw ConfigError("config: m_values must not be empty");
        }
        for (double m : m_values) {
            if (!(m >= 2.0)) {
                throw ConfigError("config: every m must be >= 2");
            }
        }
        if (n_paths == 0 || ks_paths == 0) {
            throw ConfigError("config: path counts must be positive");
        }
        if (!(tolerance >= 0.0) || !(singular_cut >= 0.0)) {
            throw ConfigError("config: tolerance and singular_cut must be nonnegative");
        }
        window.validate(n_steps);
        schedule.build();
        schedule_b.build();
        quantity_from_string(quantity);
        drift_quadrature();
        const DriftSpec spec = drift_spec();
        check_drift_regularity(spec.declared_beta, hurst);
        if (suite == Suite::Flagship) {
            if (!spec.atomic()) {
                throw ConfigError("config: the flagship suite needs an atomic measure drift");
            }
            check_flagship_gate(dimension, hurst);
        }
        if (suite == Suite::Regularization) {
            check_regularization_gamma(gamma.value_or(spec.declared_beta), hurst);
        }
        if (suite == Suite::Stability && schedule.last - schedule.first != schedule_b.last - schedule_b.first) {
            throw ConfigError("stability: the two families need the same number of levels");
        }
    }
};

namespace detail {

inline Json atom_json(const Atom& a) { return Json{{"location", a.location}, {"weight", a.weight}}; }

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw ConfigError(where + ": unknown key '" + item.key() + "'");
        }
    }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(where + ": key '" + key + "' has the wrong type");
    }
}

} // namespace detail

inline Json to_json(const DriftConfig& d) {
    Json j{{"type", d.type}};
    if (d.type == "dirac" && d.atoms.size() == 1) {
        j["location"] = d.atoms[0].location;
        j["weight"] = d.atoms[0].weight;
    } else if (d.type == "atoms") {
        Json list = Json::array();
        for (const Atom& a : d.atoms) {
            list.push_back(detail::atom_json(a));
        }
        j["atoms"] = list;
    } else if (d.type == "constant") {
        j["value"] = d.value;
    } else if (d.type == "tanh") {
        j["scale"] = d.scale;
    }
    if (d.beta) {
        j["beta"] = *d.beta;
    }
    return j;
}

inline DriftConfig drift_config_from_json(const Json& j, std::size_t d) {
    detail::check_keys(j, {"type", "location", "weight", "atoms", "value", "scale", "beta"}, "drift");
    DriftConfig out;
    detail::read(j, "type", out.type, "drift");
    if (out.type == "dirac") {
        Atom a{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
        detail::read(j, "location", a.location, "drift");
        detail::read(j, "weight", a.weight, "drift");
        out.atoms = {a};
    } else if (out.type == "atoms") {
        if (!j.contains("atoms") || !j.at("atoms").is_array()) {
            throw ConfigError("drift: atoms needs an 'atoms' array");
        }
        for (const Json& a : j.at("atoms")) {
            detail::check_keys(a, {"location", "weight"}, "drift atom");
            Atom atom;
            detail::read(a, "location", atom.location, "drift atom");
            detail::read(a, "weight", atom.weight, "drift atom");
            out.atoms.push_back(atom);
        }
    }
    detail::read(j, "value", out.value, "drift");
    detail::read(j, "scale", out.scale, "drift");
    if (j.contains("beta")) {
        double b = 0.0;
        detail::read(j, "beta", b, "drift");
        out.beta = b;
    }
    return out;
}

inline Json to_json(const ScheduleConfig& s) {
    return Json{{"kernel", s.kernel}, {"base", s.base}, {"first", s.first}, {"last", s.last}};
}

inline ScheduleConfig schedule_from_json(const Json& j, ScheduleConfig out, const std::string& where) {
    detail::check_keys(j, {"kernel", "base", "first", "last"}, where);
    detail::read(j, "kernel", out.kernel, where);
    detail::read(j, "base", out.base, where);
    detail::read(j, "first", out.first, where);
    detail::read(j, "last", out.last, where);
    return out;
}

inline Json to_json(const ExperimentConfig& c) {
    Json j{{"name", c.name},
           {"suite", to_string(c.suite)},
           {"H", c.hurst},
           {"d", c.dimension},
           {"T", c.horizon},
           {"n_steps", c.n_steps},
           {"lattice", Json{{"L", c.half_width}, {"points", c.lattice_points}}},
           {"x0", c.start()},
           {"drift", to_json(c.drift.resolved(c.dimension))},
           {"eps", c.eps},
           {"schedule", to_json(c.schedule)},
           {"schedule_b", to_json(c.schedule_b)},
           {"m_values", c.m_values},
           {"lag_window", Json{{"level_lo", c.window.level_lo}, {"level_hi", c.window.level_hi}}},
           {"singular_cut", c.singular_cut},
           {"n_paths", c.n_paths},
           {"ks_paths", c.ks_paths},
           {"master_seed", c.master_seed},
           {"quantity", c.quantity},
           {"quadrature", to_string(c.drift_quadrature())},
           {"tolerance", c.tolerance}};
    if (c.gamma) {
        j["gamma"] = *c.gamma;
    }
    return j;
}

inline ExperimentConfig config_from_json(const Json& j) {
    const std::string where = "config";
    detail::check_keys(j,
                       {"name", "suite", "H", "d", "T", "n_steps", "lattice", "x0", "drift", "eps", "schedule",
                        "schedule_b", "m_values", "lag_window", "singular_cut", "n_paths", "ks_paths", "master_seed",
                        "quantity", "gamma", "quadrature", "tolerance"},
                       where);
    ExperimentConfig c;
    detail::read(j, "name", c.name, where);
    if (j.contains("suite")) {
        std::string s;
        detail::read(j, "suite", s, where);
        c.suite = suite_from_string(s);
    }
    detail::read(j, "H", c.hurst, where);
    detail::read(j, "d", c.dimension, where);
    detail::read(j, "T", c.horizon, where);
    detail::read(j, "n_steps", c.n_steps, where);
    if (j.contains("lattice")) {
        const Json& l = j.at("lattice");
        detail::check_keys(l, {"L", "points"}, "lattice");
        detail::read(l, "L", c.half_width, "lattice");
        detail::read(l, "points", c.lattice_points, "lattice");
    }
    detail::read(j, "x0", c.x0, where);
    if (j.contains("drift")) {
        c.drift = drift_config_from_json(j.at("drift"), c.dimension);
    } else {
        c.drift.atoms = {Atom{std::vector<double>(c.dimension, 0.0), std::vector<double>(c.dimension, 1.0)}};
    }
    detail::read(j, "eps", c.eps, where);
    if (j.contains("schedule")) {
        c.schedule = schedule_from_json(j.at("schedule"), c.schedule, "schedule");
    }
    if (j.contains("schedule_b")) {
        c.schedule_b = schedule_from_json(j.at("schedule_b"), c.schedule_b, "schedule_b");
    }
    detail::read(j, "m_values", c.m_values, where);
    if (j.contains("lag_window")) {
        const Json& w = j.at("lag_window");
        detail::check_keys(w, {"level_lo", "level_hi"}, "lag_window");
        detail::read(w, "level_lo", c.window.level_lo, "lag_window");
        detail::read(w, "level_hi", c.window.level_hi, "lag_window");
    }
    detail::read(j, "singular_cut", c.singular_cut, where);
    detail::read(j, "n_paths", c.n_paths, where);
    detail::read(j, "ks_paths", c.ks_paths, where);
    detail::read(j, "master_seed", c.master_seed, where);
    detail::read(j, "quantity", c.quantity, where);
    if (j.contains("gamma")) {
        double g = 0.0;
        detail::read(j, "gamma", g, where);
        c.gamma = g;
    }
    if (j.contains("quadrature")) {
        std::string q;
        detail::read(j, "quadrature", q, where);
        c.quadrature = q;
    }
    detail::read(j, "tolerance", c.tolerance, where);
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("config: not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

/// Canonical text: sorted keys, two-space indent.
inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex;
    out.width(16);
    out.fill('0');
    out << v;
    return out.str();
}

/// Hash of the canonical serialization.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

} // namespace fbmlab
