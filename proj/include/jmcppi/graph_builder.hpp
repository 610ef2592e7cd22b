#pragma once

#include "jmcppi/data_model.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace jmcppi {

enum class EdgeType { sequential = 0, radial = 1, knn = 2 };
inline constexpr std::array<EdgeType, 3> kEdgeTypes = {EdgeType::sequential, EdgeType::radial, EdgeType::knn};
inline constexpr std::array<std::string_view, 3> kEdgeTypeNames = {"sequential", "radial", "knn"};

/// Residue-level heterogeneous graph: one feature row per residue and three typed,
/// symmetric edge sets.
struct ProteinStructureGraph {
    std::string id;
    Matrix features;
    EdgeList edges_seq;
    EdgeList edges_rad;
    EdgeList edges_knn;

    [[nodiscard]] Index residue_count() const { return features.rows(); }
    [[nodiscard]] const EdgeList& edges(EdgeType type) const;
    [[nodiscard]] EdgeList& edges(EdgeType type);
};

struct ContactParams {
    double radius = 10.0;
    int k = 5;
};

/// For each residue, its k nearest other residues by Euclidean distance
/// (ties broken by lower index). Rows are ordered nearest first.
std::vector<std::vector<Index>> nearest_neighbors(std::span<const Eigen::Vector3d> coords, int k);

EdgeList sequential_edges(Index residue_count);
EdgeList radial_edges(std::span<const Eigen::Vector3d> coords, double radius);
/// Symmetrized KNN edges, sorted by (source, target) with duplicates removed.
EdgeList knn_edges(std::span<const Eigen::Vector3d> coords, int k);

/// Builds the graph on raw (unstandardized) property features.
ProteinStructureGraph build_structure_graph(const ProteinRecord& record, const AminoAcidPropertyTable& table,
                                            double radius, int k);
inline ProteinStructureGraph build_structure_graph(const ProteinRecord& record, const AminoAcidPropertyTable& table,
                                                   const ContactParams& params = {}) {
    return build_structure_graph(record, table, params.radius, params.k);
}

/// Disjoint union of several structure graphs, with node indices offset per member.
struct StructureBatch {
    ProteinStructureGraph graph;
    std::vector<Index> offsets;  // start row of each member; offsets.back() == total rows
};
StructureBatch batch_graphs(std::span<const ProteinStructureGraph* const> members);

/// Ordered protein id -> vector table (pooled protein representations).
struct EmbeddingTable {
    std::vector<std::string> ids;
    Matrix values;

    [[nodiscard]] std::optional<Index> find(const std::string& id) const;
    [[nodiscard]] Index size() const { return static_cast<Index>(ids.size()); }
};

void write_embeddings(std::ostream& out, const EmbeddingTable& table);
EmbeddingTable read_embeddings(std::istream& in);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// P x 7 binary label matrix aligned with ProteinInteractionGraph::pairs.
using LabelMatrix = Matrix;

struct ProteinInteractionGraph {
    std::vector<std::string> protein_ids;
    Matrix node_features;
    std::vector<std::pair<Index, Index>> pairs;
    /// Pair p is stored as edges 2p (a -> b) and 2p + 1 (b -> a).
    EdgeList edges;
    LabelMatrix labels;

    [[nodiscard]] Index node_count() const { return static_cast<Index>(protein_ids.size()); }
    [[nodiscard]] Index pair_count() const { return static_cast<Index>(pairs.size()); }
    /// Both directions of the selected pairs, in the given order.
    [[nodiscard]] EdgeList edges_for(std::span<const Index> pair_indices) const;
};

/// One node per pooled protein (table order) and one undirected edge per record.
ProteinInteractionGraph build_interaction_graph(std::span<const InteractionRecord> records,
                                                const EmbeddingTable& pooled);

/// Cache key over everything that determines a structure graph besides the record itself.
std::uint64_t graph_cache_key(const ContactParams& params, const AminoAcidPropertyTable& table);
std::filesystem::path graph_cache_path(const std::filesystem::path& dir, const std::string& protein_id,
                                       std::uint64_t key);
void save_structure_graph(const std::filesystem::path& path, const ProteinStructureGraph& graph,
                          std::uint64_t key);
/// Returns nullopt when the file is absent or was written under a different key.
std::optional<ProteinStructureGraph> load_structure_graph(const std::filesystem::path& path, std::uint64_t key);

}  // namespace jmcppi
