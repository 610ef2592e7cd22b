#pragma once

#include "jmcppi/graph_builder.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>
#include <vector>

namespace jmcppi {

enum class SplitScheme { random, bfs, dfs };

std::string_view to_string(SplitScheme scheme);
SplitScheme parse_split_scheme(std::string_view name);

/// Train/val/test partition of the undirected pair list.
struct SplitSpec {
    SplitScheme scheme = SplitScheme::random;
    std::uint64_t seed = 0;
    std::vector<Index> train;
    std::vector<Index> val;
    std::vector<Index> test;

    /// Throws ValidationError unless the three lists partition [0, pair_count).
    void validate(Index pair_count) const;

    friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

/// Test-pair category relative to the proteins present in training pairs:
/// both seen, exactly one seen, neither seen.
enum class SubsetTag { BS, ES, NS };

std::string_view to_string(SubsetTag tag);

/// Shuffles pair indices and cuts at floor(0.6 P) and floor(0.8 P).
SplitSpec split_random(Index pair_count, std::uint64_t seed);

/// Protein-level BFS/DFS hold-out. Starting from a seeded random root (or `root`
/// when given), visiting a protein touches its not-yet-held pairs in ascending
/// neighbour-id order until floor(0.4 P) pairs are held out. Held pairs whose two
/// proteins both still occur in training pairs are routed to validation; the rest
/// are shuffled and split evenly, so test pairs never have both proteins seen.
SplitSpec split_traversal(const ProteinInteractionGraph& graph, SplitScheme scheme, std::uint64_t seed,
                          std::optional<Index> root = std::nullopt);

std::vector<SubsetTag> classify_subsets(const SplitSpec& split, const ProteinInteractionGraph& graph);

void save_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

}  // namespace jmcppi
