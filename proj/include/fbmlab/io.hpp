#pragma once

// File formats: flat little-endian float64 arrays with a JSON sidecar for
// paths and grid functions, CSV tables with 17 significant digits, and JSON
// reports. Every numeric file carries the (config hash, master seed) pair.

#include "fbmlab/errors.hpp"
#include "fbmlab/fbm.hpp"
#include "fbmlab/lattice.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fbmlab {

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

struct OutputHeader {
    std::string config_hash;
    std::uint64_t master_seed = 0;

    friend bool operator==(const OutputHeader&, const OutputHeader&) = default;
};

namespace io {

using Json = nlohmann::json;

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open '" + path + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Writes through a temporary file and renames, so readers never see a partial file.
inline void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::filesystem::create_directories(target.parent_path());
    }
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ConfigError("cannot write '" + path + "'");
        }
        out << text;
        if (!out) {
            throw ConfigError("write failed for '" + path + "'");
        }
    }
    std::filesystem::rename(tmp, target);
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const Json::parse_error& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline Json header_json(const OutputHeader& h) { return Json{{"config_hash", h.config_hash}, {"master_seed", h.master_seed}}; }

inline OutputHeader header_from_json(const Json& j, const std::string& where) {
    try {
        return OutputHeader{j.at("config_hash").get<std::string>(), j.at("master_seed").get<std::uint64_t>()};
    } catch (const Json::exception&) {
        throw ConfigError(where + ": missing config_hash/master_seed header");
    }
}

inline std::string sidecar_path(const std::string& base) { return base + ".json"; }
inline std::string binary_path(const std::string& base) { return base + ".bin"; }

inline void write_doubles(const std::string& path, const std::vector<double>& data) {
    std::string bytes(data.size() * sizeof(double), '\0');
    std::memcpy(bytes.data(), data.data(), bytes.size());
    write_text(path, bytes);
}

inline std::vector<double> read_doubles(const std::string& path, std::size_t expected) {
    const std::string bytes = read_text(path);
    if (bytes.size() != expected * sizeof(double)) {
        throw ConfigError("'" + path + "' holds " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected * sizeof(double)));
    }
    std::vector<double> data(expected);
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return data;
}

} // namespace io

/// Paths of one grid and kind: `base.bin` holds values path after path,
/// `base.json` the grid, Hurst index, kind and seed lineages.
inline void write_paths(const std::string& base, const std::vector<GridPath>& paths, const OutputHeader& header) {
    require(!paths.empty(), "write_paths: no paths");
    const GridPath& first = paths.front();
    std::vector<double> data;
    data.reserve(paths.size() * first.values.size());
    io::Json lineages = io::Json::array();
    for (const GridPath& p : paths) {
        require(p.times == first.times && p.dimension == first.dimension && p.kind == first.kind,
                "write_paths: paths differ in grid, dimension or kind");
        data.insert(data.end(), p.values.begin(), p.values.end());
        lineages.push_back(io::Json::array({p.lineage.master_seed, p.lineage.path_index}));
    }
    io::Json meta = io::header_json(header);
    meta["format"] = "fbmlab-paths";
    meta["count"] = paths.size();
    meta["dimension"] = first.dimension;
    meta["n_steps"] = first.steps();
    meta["times"] = first.times;
    meta["hurst"] = first.hurst;
    meta["kind"] = to_string(first.kind);
    meta["lineages"] = lineages;
    io::write_doubles(io::binary_path(base), data);
    io::write_json(io::sidecar_path(base), meta);
}

struct PathFile {
    OutputHeader header;
    std::vector<GridPath> paths;
};

inline PathFile read_paths(const std::string& base) {
    const io::Json meta = io::read_json(io::sidecar_path(base));
    PathFile file;
    file.header = io::header_from_json(meta, base);
    try {
        if (meta.at("format").get<std::string>() != "fbmlab-paths") {
            throw ConfigError("'" + base + "' is not a path container");
        }
        const auto count = meta.at("count").get<std::size_t>();
        GridPath proto;
        proto.dimension = meta.at("dimension").get<std::size_t>();
        proto.times = meta.at("times").get<std::vector<double>>();
        proto.hurst = meta.at("hurst").get<double>();
        proto.kind = path_kind_from_string(meta.at("kind").get<std::string>());
        const auto& lineages = meta.at("lineages");
        if (lineages.size() != count || proto.times.size() != meta.at("n_steps").get<std::size_t>() + 1) {
            throw ConfigError("'" + base + "': inconsistent sidecar");
        }
        const std::size_t per = proto.times.size() * proto.dimension;
        const auto data = io::read_doubles(io::binary_path(base), count * per);
        for (std::size_t p = 0; p < count; ++p) {
            GridPath path = proto;
            path.values.assign(data.begin() + static_cast<long>(p * per), data.begin() + static_cast<long>((p + 1) * per));
            path.lineage = SeedLineage{lineages[p].at(0).get<std::uint64_t>(), lineages[p].at(1).get<std::uint64_t>()};
            file.paths.push_back(std::move(path));
        }
    } catch (const io::Json::exception& e) {
        throw ConfigError("'" + base + "': malformed sidecar: " + e.what());
    }
    return file;
}

/// A sampled field: `base.bin` holds the components one after another.
inline void write_grid_function(const std::string& base, const GridFunction& f, const OutputHeader& header,
                                const io::Json& extra = io::Json::object()) {
    io::Json meta = io::header_json(header);
    meta["format"] = "fbmlab-grid";
    meta["dimension"] = f.lattice.dimension;
    meta["half_width"] = f.lattice.half_width;
    meta["points"] = f.lattice.points;
    meta["components"] = f.components;
    meta["meta"] = extra;
    io::write_doubles(io::binary_path(base), f.values);
    io::write_json(io::sidecar_path(base), meta);
}

struct GridFile {
    OutputHeader header;
    GridFunction function;
    io::Json meta;
};

inline GridFile read_grid_function(const std::string& base) {
    const io::Json meta = io::read_json(io::sidecar_path(base));
    GridFile file;
    file.header = io::header_from_json(meta, base);
    try {
        if (meta.at("format").get<std::string>() != "fbmlab-grid") {
            throw ConfigError("'" + base + "' is not a grid-function container");
        }
        const SpatialLattice lattice{meta.at("dimension").get<std::size_t>(), meta.at("half_width").get<double>(),
                                     meta.at("points").get<std::size_t>()};
        lattice.validate();
        file.function = GridFunction(lattice, meta.at("components").get<std::size_t>());
        file.function.values = io::read_doubles(io::binary_path(base), file.function.values.size());
        file.meta = meta.value("meta", io::Json::object());
    } catch (const io::Json::exception& e) {
        throw ConfigError("'" + base + "': malformed sidecar: " + e.what());
    }
    return file;
}

/// Numeric table; the first line is "# config_hash=<hex> master_seed=<n>".
struct CsvTable {
    OutputHeader header;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add(std::vector<double> row) {
        require(row.size() == columns.size(), "CsvTable: row width differs from the header");
        rows.push_back(std::move(row));
    }
};

inline std::string render_csv(const CsvTable& t) {
    std::string out = "# config_hash=" + t.header.config_hash + " master_seed=" + std::to_string(t.header.master_seed) + "\n";
    for (std::size_t c = 0; c < t.columns.size(); ++c) {
        out += (c ? "," : "") + t.columns[c];
    }
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += (c ? "," : "") + io::format_double(row[c]);
        }
        out += "\n";
    }
    return out;
}

inline void write_csv(const std::string& path, const CsvTable& t) { io::write_text(path, render_csv(t)); }

inline CsvTable read_csv(const std::string& path) {
    std::istringstream in(io::read_text(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line) || line.rfind("# config_hash=", 0) != 0) {
        throw ConfigError("'" + path + "': missing '# config_hash=... master_seed=...' header");
    }
    {
        std::istringstream head(line.substr(2));
        std::string hash, seed;
        head >> hash >> seed;
        if (hash.rfind("config_hash=", 0) != 0 || seed.rfind("master_seed=", 0) != 0) {
            throw ConfigError("'" + path + "': malformed header line");
        }
        t.header.config_hash = hash.substr(12);
        try {
            t.header.master_seed = std::stoull(seed.substr(12));
        } catch (const std::exception&) {
            throw ConfigError("'" + path + "': malformed master_seed");
        }
    }
    if (!std::getline(in, line)) {
        throw ConfigError("'" + path + "': missing column line");
    }
    {
        std::istringstream cols(line);
        std::string col;
        while (std::getline(cols, col, ',')) {
            t.columns.push_back(col);
        }
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (used != cell.size()) {
                    throw std::invalid_argument(cell);
                }
            } catch (const std::exception&) {
                throw ConfigError("'" + path + "': non-numeric cell '" + cell + "'");
            }
        }
        if (row.size() != t.columns.size()) {
            throw ConfigError("'" + path + "': row width differs from the header");
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Row-wise concatenation; refuses tables from different configs or seeds.
inline CsvTable aggregate_csv(const std::vector<CsvTable>& tables) {
    require(!tables.empty(), "aggregate_csv: nothing to aggregate");
    CsvTable out;
    out.header = tables.front().header;
    out.columns = tables.front().columns;
    for (const CsvTable& t : tables) {
        if (t.header.config_hash != out.header.config_hash) {
            throw ConfigError("aggregate: config hash mismatch (" + t.header.config_hash + " vs " +
                              out.header.config_hash + ")");
        }
        if (t.header.master_seed != out.header.master_seed) {
            throw ConfigError("aggregate: master_seed mismatch");
        }
        if (t.columns != out.columns) {
            throw ConfigError("aggregate: column mismatch");
        }
        out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
    }
    return out;
}

} // namespace fbmlab
