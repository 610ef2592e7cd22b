#include "jmcppi/contrastive.hpp"

#include <algorithm>
#include <numeric>

namespace jmcppi {

namespace {

void check_rate(double rate, const char* who) {
    if (rate < 0.0 || rate > 1.0) {
        throw std::invalid_argument(std::string(who) + ": rate must lie in [0, 1]");
    }
}

}  // namespace

void ContrastiveConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive: temperature must be positive");
    if (gamma_in_con < 0.0) throw std::invalid_argument("contrastive: gamma must be non-negative");
    if (lambda_in_con < 0.0) throw std::invalid_argument("contrastive: lambda must be non-negative");
}

std::pair<Matrix, Matrix> perturb_nodes(const Matrix& h, double rate, nn::Rng& rng) {
    check_rate(rate, "perturb_nodes");
    Matrix keep = Matrix::Ones(h.rows(), h.cols());
    if (rate == 0.0) {
        return {h, keep};
    }
    std::bernoulli_distribution drop(rate);
    for (Index i = 0; i < h.rows(); ++i) {
        for (Index j = 0; j < h.cols(); ++j) {
            if (drop(rng)) keep(i, j) = 0.0;
        }
    }
    return {h.cwiseProduct(keep), keep};
}

std::pair<EdgeList, std::vector<Index>> perturb_edges(const EdgeList& edges, Index node_count, double rate,
                                                      nn::Rng& rng) {
    check_rate(rate, "perturb_edges");
    const std::size_t total = edges.size();
    // The small offset keeps products such as 0.29 * 100 from flooring to 28.
    const auto count = std::min(total, static_cast<std::size_t>(std::floor(rate * static_cast<double>(total) + 1e-9)));
    EdgeList out = edges;
    if (count == 0) {
        return {out, {}};
    }
    if (node_count < 1) {
        throw std::invalid_argument("perturb_edges: node_count must be positive");
    }
    std::vector<Index> slots(total);
    std::iota(slots.begin(), slots.end(), Index{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, total - 1);
        std::swap(slots[i], slots[pick(rng)]);
    }
    slots.resize(count);
    std::sort(slots.begin(), slots.end());
    std::uniform_int_distribution<Index> node(0, node_count - 1);
    for (Index s : slots) {
        out.sources[static_cast<std::size_t>(s)] = node(rng);
        out.targets[static_cast<std::size_t>(s)] = node(rng);
    }
    return {out, slots};
}

PerturbedView make_view(const Matrix& h, const EdgeList& edges, const PerturbSpec& spec) {
    nn::Rng rng(spec.seed);
    PerturbedView view;
    view.spec = spec;
    std::tie(view.features, view.node_mask) = perturb_nodes(h, spec.node_rate, rng);
    std::tie(view.edges, view.rewired) = perturb_edges(edges, h.rows(), spec.edge_rate, rng);
    return view;
}

std::pair<ad::Var, ad::Var> encode_views(ad::Tape& tape, InteractionModel& model, const PerturbedView& alpha,
                                         const PerturbedView& beta, bool training, nn::Rng& rng) {
    ad::Var ha = model.encode_proteins(tape, alpha.edges, tape.constant(alpha.features), training, rng);
    ad::Var hb = model.encode_proteins(tape, beta.edges, tape.constant(beta.features), training, rng);
    return {ha, hb};
}

ad::Var info_nce(const ad::Var& anchor, const ad::Var& view, double tau) {
    const double value = info_nce(anchor.value(), view.value(), tau);
    return anchor.tape().record(
        Matrix::Constant(1, 1, value), {anchor, view}, [anchor, view, tau](ad::Tape& tape, const Matrix& g) {
            const Matrix& a = anchor.value();
            const Matrix& b = view.value();
            const Index n = a.rows();
            const Matrix scores = (a * b.transpose()) / tau;
            // d loss / d scores: softmax over j != i, minus one on the diagonal, all scaled by 1/N.
            Matrix ds = Matrix::Zero(n, n);
            for (Index i = 0; i < n; ++i) {
                double row_max = -std::numeric_limits<double>::infinity();
                for (Index j = 0; j < n; ++j) {
                    if (j != i) row_max = std::max(row_max, scores(i, j));
                }
                double acc = 0.0;
                for (Index j = 0; j < n; ++j) {
                    if (j != i) {
                        ds(i, j) = std::exp(scores(i, j) - row_max);
                        acc += ds(i, j);
                    }
                }
                ds.row(i) /= acc;
                ds(i, i) = -1.0;
            }
            ds *= g(0, 0) / static_cast<double>(n);
            if (tape.requires_grad(anchor)) tape.accumulate(anchor, ds * b / tau);
            if (tape.requires_grad(view)) tape.accumulate(view, ds.transpose() * a / tau);
        });
}

ad::Var stage2_loss(const ad::Var& l_in, const ad::Var& l_con, const ContrastiveConfig& cfg) {
    return ad::add(l_in, ad::scale(l_con, cfg.gamma_in_con));
}

}  // namespace jmcppi
