#include "jmcppi/graph_builder.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace jmcppi {

namespace {

void sort_unique(EdgeList& edges) {
    std::vector<std::pair<Index, Index>> pairs(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) pairs[i] = {edges.sources[i], edges.targets[i]};
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    edges.sources.clear();
    edges.targets.clear();
    for (const auto& [s, t] : pairs) edges.push_back(s, t);
}

nlohmann::json edges_to_json(const EdgeList& e) {
    return nlohmann::json{{"sources", e.sources}, {"targets", e.targets}};
}

EdgeList edges_from_json(const nlohmann::json& j) {
    EdgeList e;
    e.sources = j.at("sources").get<std::vector<Index>>();
    e.targets = j.at("targets").get<std::vector<Index>>();
    return e;
}

}  // namespace

const EdgeList& ProteinStructureGraph::edges(EdgeType type) const {
    switch (type) {
        case EdgeType::sequential: return edges_seq;
        case EdgeType::radial: return edges_rad;
        case EdgeType::knn: return edges_knn;
    }
    throw std::logic_error("unknown edge type");
}

EdgeList& ProteinStructureGraph::edges(EdgeType type) {
    return const_cast<EdgeList&>(std::as_const(*this).edges(type));
}

std::vector<std::vector<Index>> nearest_neighbors(std::span<const Eigen::Vector3d> coords, int k) {
    const auto m = static_cast<Index>(coords.size());
    if (k < 1 || k >= m) {
        throw std::invalid_argument("nearest_neighbors: k must satisfy 1 <= k < residue count (k=" +
                                    std::to_string(k) + ", M=" + std::to_string(m) + ")");
    }
    std::vector<std::vector<Index>> result(coords.size());
    std::vector<Index> order(coords.size());
    std::vector<double> dist(coords.size());
    for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < m; ++j) dist[j] = (coords[i] - coords[j]).squaredNorm();
        order.resize(coords.size());
        std::iota(order.begin(), order.end(), Index{0});
        order.erase(order.begin() + i);
        std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
            return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
        });
        result[i].assign(order.begin(), order.begin() + k);
    }
    return result;
}

EdgeList sequential_edges(Index residue_count) {
    EdgeList e;
    for (Index i = 0; i + 1 < residue_count; ++i) {
        e.push_back(i, i + 1);
        e.push_back(i + 1, i);
    }
    return e;
}

EdgeList radial_edges(std::span<const Eigen::Vector3d> coords, double radius) {
    if (!(radius > 0.0)) {
        throw std::invalid_argument("radial_edges: radius must be positive");
    }
    const double r2 = radius * radius;
    EdgeList e;
    for (std::size_t i = 0; i < coords.size(); ++i) {
        for (std::size_t j = 0; j < coords.size(); ++j) {
            if (i != j && (coords[i] - coords[j]).squaredNorm() <= r2) {
                e.push_back(static_cast<Index>(i), static_cast<Index>(j));
            }
        }
    }
    return e;
}

EdgeList knn_edges(std::span<const Eigen::Vector3d> coords, int k) {
    const auto neighbors = nearest_neighbors(coords, k);
    EdgeList e;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        for (Index j : neighbors[i]) {
            e.push_back(static_cast<Index>(i), j);
            e.push_back(j, static_cast<Index>(i));
        }
    }
    sort_unique(e);
    return e;
}

ProteinStructureGraph build_structure_graph(const ProteinRecord& record, const AminoAcidPropertyTable& table,
                                            double radius, int k) {
    record.validate();
    if (k < 1 || k >= record.length()) {
        throw std::invalid_argument("build_structure_graph: protein " + record.id + " has " +
                                    std::to_string(record.length()) + " residues; k=" + std::to_string(k) +
                                    " must satisfy 1 <= k < M");
    }
    ProteinStructureGraph g;
    g.id = record.id;
    g.features = featurize(record.sequence, table);
    g.edges_seq = sequential_edges(record.length());
    g.edges_rad = radial_edges(record.coords, radius);
    g.edges_knn = knn_edges(record.coords, k);
    return g;
}

StructureBatch batch_graphs(std::span<const ProteinStructureGraph* const> members) {
    StructureBatch batch;
    Index total = 0;
    Index cols = members.empty() ? kFeatureCount : members.front()->features.cols();
    for (const auto* g : members) {
        batch.offsets.push_back(total);
        total += g->residue_count();
    }
    batch.offsets.push_back(total);
    batch.graph.id = "batch";
    batch.graph.features.resize(total, cols);
    for (std::size_t m = 0; m < members.size(); ++m) {
        const auto& g = *members[m];
        const Index off = batch.offsets[m];
        batch.graph.features.middleRows(off, g.residue_count()) = g.features;
        for (EdgeType type : kEdgeTypes) {
            const EdgeList& src = g.edges(type);
            EdgeList& dst = batch.graph.edges(type);
            for (std::size_t i = 0; i < src.size(); ++i) dst.push_back(src.sources[i] + off, src.targets[i] + off);
        }
    }
    return batch;
}

std::optional<Index> EmbeddingTable::find(const std::string& id) const {
    const auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) return std::nullopt;
    return static_cast<Index>(it - ids.begin());
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
    out << std::setprecision(17);
    for (Index i = 0; i < table.size(); ++i) {
        out << table.ids[static_cast<std::size_t>(i)];
        for (Index c = 0; c < table.values.cols(); ++c) out << '\t' << table.values(i, c);
        out << '\n';
    }
}

EmbeddingTable read_embeddings(std::istream& in) {
    EmbeddingTable table;
    std::vector<std::vector<double>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id;
        std::getline(ss, id, '\t');
        std::vector<double> row;
        std::string field;
        while (std::getline(ss, field, '\t')) {
            try {
                row.push_back(std::stod(field));
            } catch (const std::exception&) {
                throw ParseError("embedding file line " + std::to_string(line_no) + ": bad number '" + field + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError("embedding file line " + std::to_string(line_no) + ": inconsistent width");
        }
        table.ids.push_back(id);
        rows.push_back(std::move(row));
    }
    const Index width = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
    table.values.resize(static_cast<Index>(rows.size()), width);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Index c = 0; c < width; ++c) table.values(static_cast<Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
    return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_embeddings(out, table);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return read_embeddings(in);
}

EdgeList ProteinInteractionGraph::edges_for(std::span<const Index> pair_indices) const {
    EdgeList e;
    for (Index p : pair_indices) {
        const auto& [a, b] = pairs.at(static_cast<std::size_t>(p));
        e.push_back(a, b);
        e.push_back(b, a);
    }
    return e;
}

ProteinInteractionGraph build_interaction_graph(std::span<const InteractionRecord> records,
                                                const EmbeddingTable& pooled) {
    ProteinInteractionGraph g;
    g.protein_ids = pooled.ids;
    g.node_features = pooled.values;
    std::unordered_map<std::string, Index> index;
    for (std::size_t i = 0; i < pooled.ids.size(); ++i) index.emplace(pooled.ids[i], static_cast<Index>(i));

    g.labels = Matrix::Zero(static_cast<Index>(records.size()), kInteractionTypeCount);
    for (std::size_t p = 0; p < records.size(); ++p) {
        const auto& r = records[p];
        const auto ia = index.find(r.protein_a);
        if (ia == index.end()) throw ValidationError("build_interaction_graph: no pooled vector for " + r.protein_a);
        const auto ib = index.find(r.protein_b);
        if (ib == index.end()) throw ValidationError("build_interaction_graph: no pooled vector for " + r.protein_b);
        if (r.types.none()) throw ValidationError("build_interaction_graph: pair " + r.protein_a + "/" + r.protein_b + " has no type");
        g.pairs.emplace_back(ia->second, ib->second);
        g.edges.push_back(ia->second, ib->second);
        g.edges.push_back(ib->second, ia->second);
        for (int c = 0; c < kInteractionTypeCount; ++c) {
            g.labels(static_cast<Index>(p), c) = r.types.test(static_cast<std::size_t>(c)) ? 1.0 : 0.0;
        }
    }
    return g;
}

std::uint64_t graph_cache_key(const ContactParams& params, const AminoAcidPropertyTable& table) {
    std::ostringstream text;
    text << std::setprecision(17) << "radius=" << params.radius << ";k=" << params.k << ";table=" << table.hash();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text.str()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::filesystem::path graph_cache_path(const std::filesystem::path& dir, const std::string& protein_id,
                                       std::uint64_t key) {
    std::string safe = protein_id;
    for (char& c : safe) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
    }
    std::ostringstream name;
    name << safe << '.' << std::hex << std::setw(16) << std::setfill('0') << key << ".graph.json";
    return dir / name.str();
}

void save_structure_graph(const std::filesystem::path& path, const ProteinStructureGraph& graph,
                          std::uint64_t key) {
    nlohmann::json features = nlohmann::json::array();
    for (Index i = 0; i < graph.features.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (Index c = 0; c < graph.features.cols(); ++c) r.push_back(graph.features(i, c));
        features.push_back(std::move(r));
    }
    const nlohmann::json j{{"format", "jmcppi-structure-graph"},
                           {"version", 1},
                           {"key", key},
                           {"id", graph.id},
                           {"features", features},
                           {"edges_seq", edges_to_json(graph.edges_seq)},
                           {"edges_rad", edges_to_json(graph.edges_rad)},
                           {"edges_knn", edges_to_json(graph.edges_knn)}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump() << '\n';
}

std::optional<ProteinStructureGraph> load_structure_graph(const std::filesystem::path& path, std::uint64_t key) {
    std::ifstream in(path);
    if (!in) return std::nullopt;
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "jmcppi-structure-graph" || j.at("key").get<std::uint64_t>() != key) {
        return std::nullopt;
    }
    ProteinStructureGraph g;
    g.id = j.at("id").get<std::string>();
    const auto& rows = j.at("features");
    g.features.resize(static_cast<Index>(rows.size()), kFeatureCount);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int c = 0; c < kFeatureCount; ++c) g.features(static_cast<Index>(i), c) = rows[i].at(c).get<double>();
    }
    g.edges_seq = edges_from_json(j.at("edges_seq"));
    g.edges_rad = edges_from_json(j.at("edges_rad"));
    g.edges_knn = edges_from_json(j.at("edges_knn"));
    for (EdgeType t : kEdgeTypes) g.edges(t).validate(g.residue_count());
    return g;
}

}  // namespace jmcppi
