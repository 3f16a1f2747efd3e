#pragma once

#include <cstdint>
#include <random>

namespace fbmlab {

/// Identifies the random stream of one simulated path.
struct SeedLineage {
    std::uint64_t master_seed = 0;
    std::uint64_t path_index = 0;

    friend bool operator==(const SeedLineage&, const SeedLineage&) = default;
};

/// Purposes keep streams for different consumers of the same path disjoint.
enum class StreamPurpose : std::uint32_t {
    Noise = 0,
    Bootstrap = 1,
    Auxiliary = 2,
};

/// Independent engine for (lineage, coordinate, purpose). std::seed_seq is
/// fully specified by the standard, so the seeding is portable.
inline std::mt19937_64 make_stream(const SeedLineage& lineage, std::uint64_t coordinate,
                                   StreamPurpose purpose = StreamPurpose::Noise) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(lineage.master_seed), hi(lineage.master_seed),
                      lo(lineage.path_index),  hi(lineage.path_index),
                      lo(coordinate),          hi(coordinate),
                      static_cast<std::uint32_t>(purpose), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

} // namespace fbmlab
