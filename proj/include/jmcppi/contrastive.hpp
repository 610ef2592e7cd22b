#pragma once

#include "jmcppi/interaction_model.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace jmcppi {

enum class ViewTag { alpha, beta };

/// Perturbation settings for one view. The node and edge rates default to the
/// same value but stay independently configurable.
struct PerturbSpec {
    double node_rate = 0.0;
    double edge_rate = 0.0;
    std::uint64_t seed = 0;
    ViewTag view = ViewTag::alpha;

    static PerturbSpec shared(double rho, std::uint64_t seed, ViewTag view) { return {rho, rho, seed, view}; }
};

struct PerturbedView {
    Matrix features;
    EdgeList edges;
    /// 0/1 keep mask applied to the features.
    Matrix node_mask;
    /// Indices of the rewired edge slots, ascending.
    std::vector<Index> rewired;
    PerturbSpec spec;
};

struct ContrastiveConfig {
    double tau = 0.6;
    double gamma_in_con = 0.6;
    /// Applied as decoupled weight decay by the optimizer.
    double lambda_in_con = 1e-4;

    void validate() const;
};

/// Zeroes each entry independently with probability `rate`. Returns (H * B, B).
std::pair<Matrix, Matrix> perturb_nodes(const Matrix& h, double rate, nn::Rng& rng);

/// Picks floor(rate * |R|) distinct slots and redraws both endpoints of each uniformly
/// from [0, node_count). Self-loops and duplicates produced this way are kept.
std::pair<EdgeList, std::vector<Index>> perturb_edges(const EdgeList& edges, Index node_count, double rate,
                                                      nn::Rng& rng);

/// Node then edge perturbation from one seeded stream.
PerturbedView make_view(const Matrix& h, const EdgeList& edges, const PerturbSpec& spec);

/// Runs the one shared GIN stack over both views.
std::pair<ad::Var, ad::Var> encode_views(ad::Tape& tape, InteractionModel& model, const PerturbedView& alpha,
                                         const PerturbedView& beta, bool training, nn::Rng& rng);

/// -(1/N) sum_i log( exp(<a_i, b_i>/tau) / sum_{j != i} exp(<a_i, b_j>/tau) ).
/// The positive pair is not part of the denominator, so the value can be negative.
template <typename A, typename B>
double info_nce(const Eigen::MatrixBase<A>& anchor, const Eigen::MatrixBase<B>& view, double tau) {
    const Index n = anchor.rows();
    if (n < 2) throw std::invalid_argument("info_nce: need at least 2 rows");
    if (view.rows() != n || view.cols() != anchor.cols()) throw std::invalid_argument("info_nce: shape mismatch");
    if (!(tau > 0.0)) throw std::invalid_argument("info_nce: temperature must be positive");
    const Matrix scores = (anchor * view.transpose()) / tau;
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        for (Index j = 0; j < n; ++j) {
            if (j != i) row_max = std::max(row_max, scores(i, j));
        }
        double acc = 0.0;
        for (Index j = 0; j < n; ++j) {
            if (j != i) acc += std::exp(scores(i, j) - row_max);
        }
        total += -(scores(i, i) - (row_max + std::log(acc)));
    }
    return total / static_cast<double>(n);
}

ad::Var info_nce(const ad::Var& anchor, const ad::Var& view, double tau);

inline double loss_con(double l_alpha, double l_beta) { return l_alpha + l_beta; }

inline double stage2_loss(double l_in, double l_con, const ContrastiveConfig& cfg) {
    return l_in + cfg.gamma_in_con * l_con;
}
ad::Var stage2_loss(const ad::Var& l_in, const ad::Var& l_con, const ContrastiveConfig& cfg);

}  // namespace jmcppi
