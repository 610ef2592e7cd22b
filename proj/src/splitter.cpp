#include "jmcppi/splitter.hpp"

#include "json.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>
#include <random>

namespace jmcppi {

namespace {

constexpr double kTrainFraction = 0.6;
constexpr double kValEnd = 0.8;
constexpr double kHeldOutFraction = 0.4;

struct Neighbor {
    Index node;
    Index pair;
};

std::vector<std::vector<Neighbor>> sorted_adjacency(const ProteinInteractionGraph& graph) {
    std::vector<std::vector<Neighbor>> adj(static_cast<std::size_t>(graph.node_count()));
    for (std::size_t p = 0; p < graph.pairs.size(); ++p) {
        const auto [a, b] = graph.pairs[p];
        adj[static_cast<std::size_t>(a)].push_back({b, static_cast<Index>(p)});
        adj[static_cast<std::size_t>(b)].push_back({a, static_cast<Index>(p)});
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end(), [&](const Neighbor& x, const Neighbor& y) {
            const auto& ix = graph.protein_ids[static_cast<std::size_t>(x.node)];
            const auto& iy = graph.protein_ids[static_cast<std::size_t>(y.node)];
            return ix < iy || (ix == iy && x.pair < y.pair);
        });
    }
    return adj;
}

std::vector<bool> seen_proteins(const ProteinInteractionGraph& graph, const std::vector<Index>& train) {
    std::vector<bool> seen(static_cast<std::size_t>(graph.node_count()), false);
    for (Index p : train) {
        const auto [a, b] = graph.pairs.at(static_cast<std::size_t>(p));
        seen[static_cast<std::size_t>(a)] = true;
        seen[static_cast<std::size_t>(b)] = true;
    }
    return seen;
}

}  // namespace

std::string_view to_string(SplitScheme scheme) {
    switch (scheme) {
        case SplitScheme::random: return "random";
        case SplitScheme::bfs: return "bfs";
        case SplitScheme::dfs: return "dfs";
    }
    return "?";
}

SplitScheme parse_split_scheme(std::string_view name) {
    if (name == "random") return SplitScheme::random;
    if (name == "bfs") return SplitScheme::bfs;
    if (name == "dfs") return SplitScheme::dfs;
    throw std::invalid_argument("unknown split scheme '" + std::string(name) + "' (valid: random, bfs, dfs)");
}

std::string_view to_string(SubsetTag tag) {
    switch (tag) {
        case SubsetTag::BS: return "BS";
        case SubsetTag::ES: return "ES";
        case SubsetTag::NS: return "NS";
    }
    return "?";
}

void SplitSpec::validate(Index pair_count) const {
    std::vector<int> hits(static_cast<std::size_t>(pair_count), 0);
    for (const auto* list : {&train, &val, &test}) {
        for (Index p : *list) {
            if (p < 0 || p >= pair_count) {
                throw ValidationError("split references pair " + std::to_string(p) + " outside [0, " +
                                      std::to_string(pair_count) + ")");
            }
            ++hits[static_cast<std::size_t>(p)];
        }
    }
    for (std::size_t p = 0; p < hits.size(); ++p) {
        if (hits[p] != 1) {
            throw ValidationError("split assigns pair " + std::to_string(p) + " " + std::to_string(hits[p]) +
                                  " times");
        }
    }
}

SplitSpec split_random(Index pair_count, std::uint64_t seed) {
    if (pair_count < 5) {
        throw std::invalid_argument("split_random: need at least 5 pairs for a 3:1:1 split, got " +
                                    std::to_string(pair_count));
    }
    std::vector<Index> order(static_cast<std::size_t>(pair_count));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto train_end = static_cast<std::size_t>(std::floor(kTrainFraction * static_cast<double>(pair_count)));
    const auto val_end = static_cast<std::size_t>(std::floor(kValEnd * static_cast<double>(pair_count)));
    SplitSpec split;
    split.scheme = SplitScheme::random;
    split.seed = seed;
    split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_end));
    split.val.assign(order.begin() + static_cast<std::ptrdiff_t>(train_end),
                     order.begin() + static_cast<std::ptrdiff_t>(val_end));
    split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(val_end), order.end());
    for (auto* list : {&split.train, &split.val, &split.test}) std::sort(list->begin(), list->end());
    return split;
}

SplitSpec split_traversal(const ProteinInteractionGraph& graph, SplitScheme scheme, std::uint64_t seed,
                          std::optional<Index> root) {
    if (scheme == SplitScheme::random) {
        throw std::invalid_argument("split_traversal: scheme must be bfs or dfs");
    }
    const Index pair_count = graph.pair_count();
    const auto quota = static_cast<std::size_t>(std::floor(kHeldOutFraction * static_cast<double>(pair_count)));
    if (quota == 0) {
        throw std::invalid_argument("split_traversal: " + std::to_string(pair_count) +
                                    " pairs are too few to hold out any");
    }
    const auto adj = sorted_adjacency(graph);
    const auto n = static_cast<std::size_t>(graph.node_count());
    std::mt19937_64 rng(seed);

    std::vector<bool> held(static_cast<std::size_t>(pair_count), false);
    std::vector<bool> visited(n, false);
    std::vector<bool> discovered(n, false);
    std::vector<Index> held_order;
    std::deque<Index> frontier;

    auto pick_root = [&]() -> Index {
        std::vector<Index> candidates;
        for (std::size_t v = 0; v < n; ++v) {
            if (visited[v]) continue;
            const bool open = std::any_of(adj[v].begin(), adj[v].end(),
                                          [&](const Neighbor& nb) { return !held[static_cast<std::size_t>(nb.pair)]; });
            if (open) candidates.push_back(static_cast<Index>(v));
        }
        if (candidates.empty()) {
            throw std::runtime_error("split_traversal: every protein exhausted before reaching the hold-out quota");
        }
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        return candidates[pick(rng)];
    };

    if (root) {
        if (*root < 0 || *root >= graph.node_count()) {
            throw std::invalid_argument("split_traversal: root out of range");
        }
        frontier.push_back(*root);
    } else {
        frontier.push_back(pick_root());
    }
    discovered[static_cast<std::size_t>(frontier.front())] = true;

    while (held_order.size() < quota) {
        if (frontier.empty()) {
            const Index r = pick_root();
            discovered[static_cast<std::size_t>(r)] = true;
            frontier.push_back(r);
        }
        Index v = 0;
        if (scheme == SplitScheme::bfs) {
            v = frontier.front();
            frontier.pop_front();
        } else {
            v = frontier.back();
            frontier.pop_back();
        }
        const auto vi = static_cast<std::size_t>(v);
        if (visited[vi]) continue;
        visited[vi] = true;

        for (const Neighbor& nb : adj[vi]) {
            if (held_order.size() == quota) break;
            if (!held[static_cast<std::size_t>(nb.pair)]) {
                held[static_cast<std::size_t>(nb.pair)] = true;
                held_order.push_back(nb.pair);
            }
        }
        if (scheme == SplitScheme::bfs) {
            for (const Neighbor& nb : adj[vi]) {
                if (!discovered[static_cast<std::size_t>(nb.node)]) {
                    discovered[static_cast<std::size_t>(nb.node)] = true;
                    frontier.push_back(nb.node);
                }
            }
        } else {
            // Pushed in reverse so the smallest id is expanded first.
            for (auto it = adj[vi].rbegin(); it != adj[vi].rend(); ++it) {
                if (!visited[static_cast<std::size_t>(it->node)]) frontier.push_back(it->node);
            }
        }
    }

    SplitSpec split;
    split.scheme = scheme;
    split.seed = seed;
    for (Index p = 0; p < pair_count; ++p) {
        if (!held[static_cast<std::size_t>(p)]) split.train.push_back(p);
    }
    const auto seen = seen_proteins(graph, split.train);
    auto both_seen = [&](Index p) {
        const auto [a, b] = graph.pairs[static_cast<std::size_t>(p)];
        return seen[static_cast<std::size_t>(a)] && seen[static_cast<std::size_t>(b)];
    };
    std::shuffle(held_order.begin(), held_order.end(), rng);
    const auto unsafe_end = std::stable_partition(held_order.begin(), held_order.end(), both_seen);
    const auto unsafe = static_cast<std::size_t>(unsafe_end - held_order.begin());
    const std::size_t val_count = std::max(held_order.size() / 2, unsafe);
    split.val.assign(held_order.begin(), held_order.begin() + static_cast<std::ptrdiff_t>(val_count));
    split.test.assign(held_order.begin() + static_cast<std::ptrdiff_t>(val_count), held_order.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::vector<SubsetTag> classify_subsets(const SplitSpec& split, const ProteinInteractionGraph& graph) {
    const auto seen = seen_proteins(graph, split.train);
    std::vector<SubsetTag> tags;
    tags.reserve(split.test.size());
    for (Index p : split.test) {
        const auto [a, b] = graph.pairs.at(static_cast<std::size_t>(p));
        const int count = (seen[static_cast<std::size_t>(a)] ? 1 : 0) + (seen[static_cast<std::size_t>(b)] ? 1 : 0);
        tags.push_back(count == 2 ? SubsetTag::BS : count == 1 ? SubsetTag::ES : SubsetTag::NS);
    }
    return tags;
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
    const nlohmann::json j{{"format", "jmcppi-split"}, {"version", 1},          {"scheme", to_string(split.scheme)},
                           {"seed", split.seed},       {"train", split.train}, {"val", split.val},
                           {"test", split.test}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

SplitSpec load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    const auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "jmcppi-split") {
        throw ParseError(path.string() + ": not a split file");
    }
    SplitSpec split;
    split.scheme = parse_split_scheme(j.at("scheme").get<std::string>());
    split.seed = j.at("seed").get<std::uint64_t>();
    split.train = j.at("train").get<std::vector<Index>>();
    split.val = j.at("val").get<std::vector<Index>>();
    split.test = j.at("test").get<std::vector<Index>>();
    return split;
}

}  // namespace jmcppi
