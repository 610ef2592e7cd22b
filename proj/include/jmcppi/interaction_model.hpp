#pragma once

#include "jmcppi/graph_builder.hpp"
#include "jmcppi/nn.hpp"

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace jmcppi {

/// One GIN layer: learnable self weight epsilon and the update MLP
/// dense -> ReLU -> dense -> ReLU -> batch norm -> dropout.
struct GinLayerParams {
    ad::Parameter epsilon;
    nn::Linear fc1;
    nn::Linear fc2;
    nn::BatchNorm bn;

    GinLayerParams() = default;
    GinLayerParams(const std::string& name, Index in, Index width, nn::Rng& rng);
    void register_into(nn::ParameterList& list);
};

/// (1 + epsilon) h_i + sum over incoming edges of h_source.
ad::Var gin_aggregate(const EdgeList& edges, const ad::Var& h, const ad::Var& epsilon);
Matrix gin_aggregate(const EdgeList& edges, const Matrix& h, double epsilon);

ad::Var gin_layer(ad::Tape& tape, const EdgeList& edges, const ad::Var& h, GinLayerParams& params,
                  double dropout_rate, bool training, nn::Rng& rng);

struct InteractionModelConfig {
    int hidden = 1024;
    int layers = 3;
    double dropout = 0.2;

    void validate() const;
};

class InteractionModel {
public:
    InteractionModel(Index input_dim, const InteractionModelConfig& config, std::uint64_t seed);

    InteractionModel(const InteractionModel&) = delete;
    InteractionModel& operator=(const InteractionModel&) = delete;

    [[nodiscard]] const InteractionModelConfig& config() const { return config_; }
    [[nodiscard]] Index input_dim() const { return input_dim_; }

    /// Stack of GIN layers; the same parameter objects serve every graph view.
    ad::Var encode_proteins(ad::Tape& tape, const EdgeList& edges, const ad::Var& h, bool training, nn::Rng& rng);
    /// Dense -> ReLU -> dropout.
    ad::Var project_head(ad::Tape& tape, const ad::Var& encoded, bool training, nn::Rng& rng);
    /// Logits for each (a, b) row pair: classifier([h_a + h_b, h_a * h_b]).
    ad::Var pair_logits(ad::Tape& tape, const ad::Var& projected, std::span<const std::pair<Index, Index>> pairs);

    /// Evaluation-mode logits for the given pairs with message passing over `edges`.
    [[nodiscard]] Matrix predict_logits(const EdgeList& edges, const Matrix& h,
                                        std::span<const std::pair<Index, Index>> pairs);

    nn::ParameterList parameters();

    std::vector<GinLayerParams> gin;
    nn::Linear head;
    nn::Linear classifier;

private:
    InteractionModelConfig config_;
    Index input_dim_;
};

/// classifier([a + b, a * b]) for a single pair of projected protein vectors.
RowVector fuse_pair(const RowVector& a, const RowVector& b, const nn::Linear& classifier);

/// Mean over pairs of the per-class binary cross-entropy summed over classes,
/// evaluated on logits in the overflow-free form max(z,0) - z y + log(1 + exp(-|z|)).
template <typename A, typename B>
double loss_in(const Eigen::MatrixBase<A>& logits, const Eigen::MatrixBase<B>& labels) {
    if (logits.rows() != labels.rows() || logits.cols() != labels.cols()) {
        throw std::invalid_argument("loss_in: shape mismatch");
    }
    if (logits.rows() < 1) {
        throw std::invalid_argument("loss_in: no pairs");
    }
    double total = 0.0;
    for (Index i = 0; i < logits.rows(); ++i) {
        for (Index c = 0; c < logits.cols(); ++c) {
            const double z = logits(i, c);
            total += std::max(z, 0.0) - z * labels(i, c) + std::log1p(std::exp(-std::abs(z)));
        }
    }
    return total / static_cast<double>(logits.rows());
}

ad::Var loss_in(const ad::Var& logits, const Matrix& labels);

template <typename Derived>
Matrix sigmoid(const Eigen::MatrixBase<Derived>& logits) {
    return logits.unaryExpr([](double z) {
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    });
}

/// 1 where sigmoid(logit) >= threshold, else 0.
template <typename Derived>
Matrix predict(const Eigen::MatrixBase<Derived>& logits, double threshold = 0.5) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("predict: threshold must lie in (0, 1)");
    }
    return sigmoid(logits).unaryExpr([threshold](double p) { return p >= threshold ? 1.0 : 0.0; });
}

}  // namespace jmcppi
