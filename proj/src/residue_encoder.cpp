#include "jmcppi/residue_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace jmcppi {

GatParams::GatParams(const std::string& name, Index in, Index width, int h, nn::Rng& rng)
    : value(name + ".W_value", nn::glorot_uniform(in, width * h, rng)),
      query(name + ".W_query", nn::glorot_uniform(in, width * h, rng) / std::sqrt(static_cast<double>(width))),
      key(name + ".W_key", nn::glorot_uniform(in, width * h, rng)),
      // Starts equal to the numerator key so initial coefficients form a softmax;
      // the two are trained independently from there.
      key_norm(name + ".W_key_norm", key.value),
      heads(h) {}

void GatParams::register_into(nn::ParameterList& list) {
    list.add(value);
    list.add(query);
    list.add(key);
    list.add(key_norm);
}

GatOutput gat_layer(ad::Tape& tape, const EdgeList& edges, const ad::Var& x, GatParams& params,
                    HeadCombine combine) {
    const Index m = x.rows();
    const int heads = params.heads;
    edges.validate(m);

    ad::Var values = ad::matmul(x, tape.parameter(params.value));
    ad::Var queries = ad::matmul(x, tape.parameter(params.query));
    ad::Var keys = ad::matmul(x, tape.parameter(params.key));
    ad::Var norm_keys = ad::matmul(x, tape.parameter(params.key_norm));

    ad::Var q_edge = ad::gather_rows(queries, edges.targets);
    ad::Var num_logits = ad::head_dot(q_edge, ad::gather_rows(keys, edges.sources), heads);
    ad::Var den_logits = ad::head_dot(q_edge, ad::gather_rows(norm_keys, edges.sources), heads);

    // Subtracting a per-(target, head) constant from both exponents leaves every ratio
    // unchanged. Using the largest normalizer logit keeps each denominator >= 1.
    Matrix shift = Matrix::Constant(m, heads, -std::numeric_limits<double>::infinity());
    for (std::size_t e = 0; e < edges.size(); ++e) {
        shift.row(edges.targets[e]) = shift.row(edges.targets[e]).cwiseMax(den_logits.value().row(static_cast<Index>(e)));
    }
    Matrix edge_shift(static_cast<Index>(edges.size()), heads);
    for (std::size_t e = 0; e < edges.size(); ++e) edge_shift.row(static_cast<Index>(e)) = shift.row(edges.targets[e]);
    ad::Var shift_var = tape.constant(std::move(edge_shift));

    ad::Var numerators = ad::exp(ad::sub(num_logits, shift_var));
    ad::Var denominators = ad::exp(ad::sub(den_logits, shift_var));
    ad::Var node_norm = ad::scatter_add_rows(denominators, edges.targets, m);
    ad::Var attention = ad::div(numerators, ad::gather_rows(node_norm, edges.targets));

    ad::Var messages = ad::head_scale(ad::gather_rows(values, edges.sources), attention, heads);
    ad::Var out = ad::scatter_add_rows(messages, edges.targets, m);
    if (combine == HeadCombine::average) {
        out = ad::head_mean(out, heads);
    }
    return {out, attention};
}

Matrix gat_layer(const EdgeList& edges, const Matrix& x, const GatParams& params, HeadCombine combine) {
    GatParams local = params;
    ad::Tape tape;
    return gat_layer(tape, edges, tape.constant(x), local, combine).features.value();
}

Matrix attention_coefficients(const EdgeList& edges, const Matrix& x, const GatParams& params) {
    GatParams local = params;
    ad::Tape tape;
    return gat_layer(tape, edges, tape.constant(x), local, HeadCombine::concat).attention.value();
}

HetLayerParams::HetLayerParams(const std::string& name, Index in, Index width, int heads, nn::Rng& rng) {
    for (std::size_t t = 0; t < per_type.size(); ++t) {
        per_type[t] = GatParams(name + "." + std::string(kEdgeTypeNames[t]), in, width, heads, rng);
    }
}

void HetLayerParams::register_into(nn::ParameterList& list) {
    for (auto& p : per_type) p.register_into(list);
}

ad::Var het_layer(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& x, HetLayerParams& params,
                  HeadCombine combine) {
    ad::Var total;
    for (EdgeType type : kEdgeTypes) {
        ad::Var out = gat_layer(tape, graph.edges(type), x, params.per_type[static_cast<std::size_t>(type)], combine)
                          .features;
        total = total.valid() ? ad::add(total, out) : out;
    }
    return total;
}

Matrix het_layer(const ProteinStructureGraph& graph, const Matrix& x, const HetLayerParams& params,
                 HeadCombine combine) {
    HetLayerParams local = params;
    ad::Tape tape;
    return het_layer(tape, graph, tape.constant(x), local, combine).value();
}

BlockParams::BlockParams(const std::string& name, Index in, Index out, nn::Rng& rng)
    : fc(name + ".fc", in, out, rng), bn(name + ".bn", out) {}

void BlockParams::register_into(nn::ParameterList& list) {
    fc.register_into(list);
    bn.register_into(list);
}

ad::Var encoder_block(ad::Tape& tape, const ad::Var& x, BlockParams& params, double dropout_rate, bool training,
                      nn::Rng& rng) {
    ad::Var h = ad::relu(params.fc.forward(tape, x));
    h = params.bn.forward(tape, h, training);
    return nn::dropout(h, dropout_rate, training, rng);
}

void ResidueEncoderConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("residue encoder: layer count must be at least 1");
    if (hidden < 1) throw std::invalid_argument("residue encoder: hidden dimension must be positive");
    if (heads < 1) throw std::invalid_argument("residue encoder: head count must be positive");
    if (dropout < 0.0 || dropout > 1.0) throw std::invalid_argument("residue encoder: dropout must lie in [0, 1]");
}

ResidueAutoencoder::ResidueAutoencoder(const ResidueEncoderConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    nn::Rng rng(seed);
    const Index d = config_.hidden;
    const int h = config_.heads;
    mask_token = ad::Parameter("mask_token", Matrix::Zero(1, kFeatureCount));
    input_projection = nn::Linear("project_in", kFeatureCount, d, rng);
    for (int stack = 0; stack < 2; ++stack) {
        auto& het = stack == 0 ? encoder_het : decoder_het;
        auto& blocks = stack == 0 ? encoder_blocks : decoder_blocks;
        const std::string prefix = stack == 0 ? "encoder" : "decoder";
        for (int l = 0; l < config_.layers; ++l) {
            const bool last = l + 1 == config_.layers;
            const std::string name = prefix + "." + std::to_string(l);
            het.emplace_back(name + ".het", d, d, h, rng);
            blocks.emplace_back(name + ".block", last ? d : d * h, d, rng);
        }
    }
    output_projection = nn::Linear("project_out", d, kFeatureCount, rng);
}

ad::Var ResidueAutoencoder::project_in(ad::Tape& tape, const ad::Var& x) { return input_projection.forward(tape, x); }

ad::Var ResidueAutoencoder::run_stack(ad::Tape& tape, const ProteinStructureGraph& graph, ad::Var x,
                                      std::vector<HetLayerParams>& het, std::vector<BlockParams>& blocks,
                                      bool training, nn::Rng& rng) {
    for (std::size_t l = 0; l < het.size(); ++l) {
        const HeadCombine combine = l + 1 == het.size() ? HeadCombine::average : HeadCombine::concat;
        x = het_layer(tape, graph, x, het[l], combine);
        x = encoder_block(tape, x, blocks[l], config_.dropout, training, rng);
    }
    return x;
}

ad::Var ResidueAutoencoder::encode(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& projected,
                                   bool training, nn::Rng& rng) {
    return run_stack(tape, graph, projected, encoder_het, encoder_blocks, training, rng);
}

ad::Var ResidueAutoencoder::decode(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& encoded,
                                   bool training, nn::Rng& rng) {
    ad::Var decoded = run_stack(tape, graph, encoded, decoder_het, decoder_blocks, training, rng);
    return output_projection.forward(tape, decoded);
}

ad::Var ResidueAutoencoder::reconstruct(ad::Tape& tape, const ProteinStructureGraph& graph, const ad::Var& x,
                                        bool training, nn::Rng& rng) {
    return decode(tape, graph, encode(tape, graph, project_in(tape, x), training, rng), training, rng);
}

Matrix ResidueAutoencoder::embed(const ProteinStructureGraph& graph) {
    ad::Tape tape;
    nn::Rng unused(0);
    return encode(tape, graph, project_in(tape, tape.constant(graph.features)), false, unused).value();
}

nn::ParameterList ResidueAutoencoder::parameters() {
    nn::ParameterList list;
    list.add(mask_token);
    input_projection.register_into(list);
    for (std::size_t l = 0; l < encoder_het.size(); ++l) {
        encoder_het[l].register_into(list);
        encoder_blocks[l].register_into(list);
    }
    for (std::size_t l = 0; l < decoder_het.size(); ++l) {
        decoder_het[l].register_into(list);
        decoder_blocks[l].register_into(list);
    }
    output_projection.register_into(list);
    return list;
}

std::vector<Index> sample_mask_rows(Index rows, double rate, nn::Rng& rng) {
    if (rate < 0.0 || rate > 1.0) {
        throw std::invalid_argument("sample_mask_rows: rate must lie in [0, 1]");
    }
    const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(rows)));
    std::vector<Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Index{0});
    // Partial Fisher-Yates: the first `count` slots become a uniform sample without replacement.
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    order.resize(count);
    std::sort(order.begin(), order.end());
    return order;
}

std::pair<Matrix, std::vector<Index>> apply_mask(const Matrix& x, const RowVector& mask_row, double rate,
                                                 nn::Rng& rng) {
    if (mask_row.cols() != x.cols()) {
        throw std::invalid_argument("apply_mask: mask row width differs from feature width");
    }
    auto rows = sample_mask_rows(x.rows(), rate, rng);
    Matrix masked = x;
    for (Index r : rows) masked.row(r) = mask_row;
    return {std::move(masked), std::move(rows)};
}

ad::Var loss_re(const ad::Var& x, const ad::Var& x_hat) {
    const double m = static_cast<double>(x.rows());
    return x.tape().record(Matrix::Constant(1, 1, loss_re(x.value(), x_hat.value())), {x, x_hat},
                           [x, x_hat, m](ad::Tape& tape, const Matrix& g) {
                               const Matrix diff = (x.value() - x_hat.value()) * (2.0 * g(0, 0) / m);
                               if (tape.requires_grad(x)) tape.accumulate(x, diff);
                               if (tape.requires_grad(x_hat)) tape.accumulate(x_hat, -diff);
                           });
}

ad::Var loss_msre(const ad::Var& x, const ad::Var& x_hat, double delta) {
    if (delta < 1.0) {
        throw std::invalid_argument("loss_msre: scale factor must be >= 1");
    }
    const double value = loss_msre(x.value(), x_hat.value(), delta);
    return x.tape().record(Matrix::Constant(1, 1, value), {x, x_hat}, [x, x_hat, delta](ad::Tape& tape, const Matrix& g) {
        const Matrix& a = x.value();
        const Matrix& b = x_hat.value();
        const double m = static_cast<double>(a.rows());
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        Matrix gb = Matrix::Zero(b.rows(), b.cols());
        for (Index i = 0; i < a.rows(); ++i) {
            const double raw_na = a.row(i).norm();
            const double raw_nb = b.row(i).norm();
            const double na = std::max(raw_na, kCosineNormFloor);
            const double nb = std::max(raw_nb, kCosineNormFloor);
            const double dot = a.row(i).dot(b.row(i));
            const double cosine = dot / (na * nb);
            const double gap = 1.0 - cosine;
            if (gap <= 0.0) continue;
            const double dloss_dcos = -delta * std::pow(gap, delta - 1.0) / m * g(0, 0);
            // d cos / d a = b / (na nb) - cos a / na^2 when the norm is above the floor.
            RowVector dcos_da = b.row(i) / (na * nb);
            if (raw_na > kCosineNormFloor) dcos_da -= cosine * a.row(i) / (na * na);
            RowVector dcos_db = a.row(i) / (na * nb);
            if (raw_nb > kCosineNormFloor) dcos_db -= cosine * b.row(i) / (nb * nb);
            ga.row(i) = dloss_dcos * dcos_da;
            gb.row(i) = dloss_dcos * dcos_db;
        }
        if (tape.requires_grad(x)) tape.accumulate(x, ga);
        if (tape.requires_grad(x_hat)) tape.accumulate(x_hat, gb);
    });
}

ad::Var stage1_loss(const ad::Var& l_re, const ad::Var& l_msre, const Stage1LossWeights& w) {
    return ad::add(l_re, ad::scale(l_msre, w.gamma_str));
}

}  // namespace jmcppi
