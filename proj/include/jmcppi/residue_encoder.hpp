#pragma once

#include "jmcppi/graph_builder.hpp"
#include "jmcppi/nn.hpp"

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace jmcppi {

/// Projections of one dot-product attention operator for a single edge type.
/// Each matrix is in x (heads * width): value (W_G), query (W_1), key (W_2) used in
/// the numerator, and key_norm (W_3) used in the normalizing sum.
struct GatParams {
    ad::Parameter value;
    ad::Parameter query;
    ad::Parameter key;
    ad::Parameter key_norm;
    int heads = 1;

    GatParams() = default;
    GatParams(const std::string& name, Index in, Index width, int heads, nn::Rng& rng);

    [[nodiscard]] Index width() const { return value.value.cols() / heads; }
    void register_into(nn::ParameterList& list);
};

enum class HeadCombine { concat, average };

struct GatOutput {
    ad::Var features;
    /// E x heads attention coefficients, row e belonging to edge e.
    ad::Var attention;
};

/// out_i = sum_{j in N(i)} a_ij W_G x_j with
/// a_ij = exp(q_i . k_j) / sum_{k in N(i)} exp(q_i . k'_k), q = W_1 x, k = W_2 x, k' = W_3 x.
/// Messages flow source -> target; nodes without incoming edges get a zero row.
GatOutput gat_layer(ad::Tape& tape, const EdgeList& edges, const ad::Var& x, GatParams& params,
                    HeadCombine combine);
Matrix gat_layer(const EdgeList& edges, const Matrix& x, const GatParams& params, HeadCombine combine);
Matrix attention_coefficients(const EdgeList& edges, const Matrix& x, const GatParams& params);

/// Heterogeneous aggregation: one attention operator per edge type, outputs summed.
struct HetLayerParams {
    std::array<GatParams, 3> per_type;

    HetLayerParams() = default;
    HetLayerParams(const std::string& name, Index in, Index width, int heads, nn::Rng& rng);
    void register_into(nn::ParameterList& list);
};

ad::Var het_layer(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& x, HetLayerParams& params,
                  HeadCombine combine);
Matrix het_layer(const ProteinStructureGraph& graph, const Matrix& x, const HetLayerParams& params,
                 HeadCombine combine);

/// Dense -> ReLU -> batch norm -> dropout.
struct BlockParams {
    nn::Linear fc;
    nn::BatchNorm bn;

    BlockParams() = default;
    BlockParams(const std::string& name, Index in, Index out, nn::Rng& rng);
    void register_into(nn::ParameterList& list);
};

ad::Var encoder_block(ad::Tape& tape, const ad::Var& x, BlockParams& params, double dropout_rate, bool training,
                      nn::Rng& rng);

struct ResidueEncoderConfig {
    int hidden = 128;
    int heads = 5;
    int layers = 4;
    double dropout = 0.2;

    void validate() const;
};

/// Encoder/decoder stack over residue graphs with a learnable mask row.
/// Hidden layers concatenate heads (each head `hidden` wide, so the block's dense
/// map sees heads * hidden columns); the last layer of each stack averages heads.
class ResidueAutoencoder {
public:
    ResidueAutoencoder(const ResidueEncoderConfig& config, std::uint64_t seed);

    ResidueAutoencoder(const ResidueAutoencoder&) = delete;
    ResidueAutoencoder& operator=(const ResidueAutoencoder&) = delete;

    [[nodiscard]] const ResidueEncoderConfig& config() const { return config_; }

    ad::Var project_in(ad::Tape& tape, const ad::Var& x);
    /// Stack of (het_layer -> encoder_block) over already projected features.
    ad::Var encode(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& projected, bool training,
                   nn::Rng& rng);
    /// Decoder stack followed by the output projection back to kFeatureCount columns.
    ad::Var decode(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& encoded, bool training,
                   nn::Rng& rng);
    /// Full reconstruction path: project_in -> encode -> decode.
    ad::Var reconstruct(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& x, bool training,
                        nn::Rng& rng);

    /// Evaluation-mode encoding of standardized features (graph.features).
    [[nodiscard]] Matrix embed(const ProteinStructureGraph& graph);

    nn::ParameterList parameters();

    ad::Parameter mask_token;
    nn::Linear input_projection;
    std::vector<HetLayerParams> encoder_het;
    std::vector<BlockParams> encoder_blocks;
    std::vector<HetLayerParams> decoder_het;
    std::vector<BlockParams> decoder_blocks;
    nn::Linear output_projection;

private:
    ad::Var run_stack(ad::Tape& tape, const ProteinStructureGraph& graph, ad::Var x,
                      std::vector<HetLayerParams>& het, std::vector<BlockParams>& blocks, bool training,
                      nn::Rng& rng);

    ResidueEncoderConfig config_;
};

/// Rows to mask: exactly round(rate * M) distinct indices, sorted ascending.
std::vector<Index> sample_mask_rows(Index rows, double rate, nn::Rng& rng);

/// Replaces the sampled rows by the mask row. Returns the masked matrix and the row set.
std::pair<Matrix, std::vector<Index>> apply_mask(const Matrix& x, const RowVector& mask_row, double rate,
                                                 nn::Rng& rng);

/// Mean over residues of the squared Euclidean reconstruction error.
template <typename A, typename B>
double loss_re(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
        throw std::invalid_argument("loss_re: shape mismatch");
    }
    return (x - x_hat).squaredNorm() / static_cast<double>(x.rows());
}

inline constexpr double kCosineNormFloor = 1e-8;

/// Mean over residues of (1 - cos(x_i, x_hat_i))^delta. Row norms are floored at
/// kCosineNormFloor so zero rows stay finite.
template <typename A, typename B>
double loss_msre(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat, double delta) {
    if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
        throw std::invalid_argument("loss_msre: shape mismatch");
    }
    double total = 0.0;
    for (Index i = 0; i < x.rows(); ++i) {
        const double na = std::max(x.row(i).norm(), kCosineNormFloor);
        const double nb = std::max(x_hat.row(i).norm(), kCosineNormFloor);
        const double cosine = x.row(i).dot(x_hat.row(i)) / (na * nb);
        total += std::pow(std::max(0.0, 1.0 - cosine), delta);
    }
    return total / static_cast<double>(x.rows());
}

ad::Var loss_re(const ad::Var& x, const ad::Var& x_hat);
ad::Var loss_msre(const ad::Var& x, const ad::Var& x_hat, double delta);

struct Stage1LossWeights {
    double gamma_str = 0.5;
    /// Applied as decoupled weight decay by the optimizer.
    double lambda_str = 1e-4;
    double delta = 1.5;
};

inline double stage1_loss(double l_re, double l_msre, const Stage1LossWeights& w) {
    return l_re + w.gamma_str * l_msre;
}
ad::Var stage1_loss(const ad::Var& l_re, const ad::Var& l_msre, const Stage1LossWeights& w);

/// Column-wise mean over residues.
template <typename Derived>
RowVector pool_protein(const Eigen::MatrixBase<Derived>& encoded) {
    if (encoded.rows() < 1) {
        throw std::invalid_argument("pool_protein: no residues");
    }
    return encoded.colwise().mean();
}

}  // namespace jmcppi
