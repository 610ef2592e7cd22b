#include "jmcppi/interaction_model.hpp"

namespace jmcppi {

GinLayerParams::GinLayerParams(const std::string& name, Index in, Index width, nn::Rng& rng)
    : epsilon(name + ".epsilon", Matrix::Zero(1, 1)),
      fc1(name + ".fc1", in, width, rng),
      fc2(name + ".fc2", width, width, rng),
      bn(name + ".bn", width) {}

void GinLayerParams::register_into(nn::ParameterList& list) {
    list.add(epsilon);
    fc1.register_into(list);
    fc2.register_into(list);
    bn.register_into(list);
}

ad::Var gin_aggregate(const EdgeList& edges, const ad::Var& h, const ad::Var& epsilon) {
    edges.validate(h.rows());
    ad::Var self = ad::add(h, ad::scale_by(h, epsilon));
    if (edges.empty()) {
        return self;
    }
    return ad::add(self, ad::scatter_add_rows(ad::gather_rows(h, edges.sources), edges.targets, h.rows()));
}

Matrix gin_aggregate(const EdgeList& edges, const Matrix& h, double epsilon) {
    ad::Tape tape;
    return gin_aggregate(edges, tape.constant(h), tape.constant(Matrix::Constant(1, 1, epsilon))).value();
}

ad::Var gin_layer(ad::Tape& tape, const EdgeList& edges, const ad::Var& h, GinLayerParams& params,
                  double dropout_rate, bool training, nn::Rng& rng) {
    ad::Var x = gin_aggregate(edges, h, tape.parameter(params.epsilon));
    x = ad::relu(params.fc1.forward(tape, x));
    x = ad::relu(params.fc2.forward(tape, x));
    x = params.bn.forward(tape, x, training);
    return nn::dropout(x, dropout_rate, training, rng);
}

void InteractionModelConfig::validate() const {
    if (layers < 1) throw std::invalid_argument("interaction model: layer count must be at least 1");
    if (hidden < 1) throw std::invalid_argument("interaction model: hidden width must be positive");
    if (dropout < 0.0 || dropout > 1.0) throw std::invalid_argument("interaction model: dropout must lie in [0, 1]");
}

InteractionModel::InteractionModel(Index input_dim, const InteractionModelConfig& config, std::uint64_t seed)
    : config_(config), input_dim_(input_dim) {
    config_.validate();
    nn::Rng rng(seed);
    Index in = input_dim;
    for (int l = 0; l < config_.layers; ++l) {
        gin.emplace_back("gin." + std::to_string(l), in, config_.hidden, rng);
        in = config_.hidden;
    }
    head = nn::Linear("head", config_.hidden, config_.hidden, rng);
    classifier = nn::Linear("classifier", 2 * config_.hidden, kInteractionTypeCount, rng);
}

ad::Var InteractionModel::encode_proteins(ad::Tape& tape, const EdgeList& edges, const ad::Var& h, bool training,
                                          nn::Rng& rng) {
    ad::Var x = h;
    for (auto& layer : gin) {
        x = gin_layer(tape, edges, x, layer, config_.dropout, training, rng);
    }
    return x;
}

ad::Var InteractionModel::project_head(ad::Tape& tape, const ad::Var& encoded, bool training, nn::Rng& rng) {
    return nn::dropout(ad::relu(head.forward(tape, encoded)), config_.dropout, training, rng);
}

ad::Var InteractionModel::pair_logits(ad::Tape& tape, const ad::Var& projected,
                                      std::span<const std::pair<Index, Index>> pairs) {
    std::vector<Index> left;
    std::vector<Index> right;
    left.reserve(pairs.size());
    right.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        left.push_back(a);
        right.push_back(b);
    }
    ad::Var ha = ad::gather_rows(projected, left);
    ad::Var hb = ad::gather_rows(projected, right);
    return classifier.forward(tape, ad::concat_cols(ad::add(ha, hb), ad::mul(ha, hb)));
}

Matrix InteractionModel::predict_logits(const EdgeList& edges, const Matrix& h,
                                        std::span<const std::pair<Index, Index>> pairs) {
    ad::Tape tape;
    nn::Rng unused(0);
    ad::Var encoded = encode_proteins(tape, edges, tape.constant(h), false, unused);
    return pair_logits(tape, project_head(tape, encoded, false, unused), pairs).value();
}

nn::ParameterList InteractionModel::parameters() {
    nn::ParameterList list;
    for (auto& layer : gin) layer.register_into(list);
    head.register_into(list);
    classifier.register_into(list);
    return list;
}

RowVector fuse_pair(const RowVector& a, const RowVector& b, const nn::Linear& classifier) {
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("fuse_pair: vectors differ in width");
    }
    RowVector joint(2 * a.cols());
    joint << a + b, a.cwiseProduct(b);
    return joint * classifier.weight.value + classifier.bias.value;
}

ad::Var loss_in(const ad::Var& logits, const Matrix& labels) {
    const double value = loss_in(logits.value(), labels);
    const double p = static_cast<double>(logits.rows());
    return logits.tape().record(Matrix::Constant(1, 1, value), {logits},
                                [logits, labels, p](ad::Tape& tape, const Matrix& g) {
                                    tape.accumulate(logits, (sigmoid(logits.value()) - labels) * (g(0, 0) / p));
                                });
}

}  // namespace jmcppi
