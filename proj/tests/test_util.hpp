#pragma once

// Helpers shared by the unit tests and the acceptance binary: random inputs,
// central finite differences and small brute-force reference computations.

#include "jmcppi/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <vector>

namespace testutil {

using jmcppi::Index;
using jmcppi::Matrix;

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    }
    return m;
}

inline Matrix random_binary(Index rows, Index cols, std::mt19937_64& rng, double p = 0.5) {
    std::bernoulli_distribution b(p);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = b(rng) ? 1.0 : 0.0;
    }
    return m;
}

/// Central differences of f at x, entry by entry.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, Matrix x, double step = 1e-5) {
    Matrix g(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) {
            const double keep = x(i, j);
            x(i, j) = keep + step;
            const double up = f(x);
            x(i, j) = keep - step;
            const double down = f(x);
            x(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * step);
        }
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    if (scale == 0.0) return 0.0;
    return (a - b).norm() / scale;
}

/// relative_error, except when both gradients are below `zero` in norm: then the
/// true gradient is structurally zero (a bias feeding batch norm, say) and the
/// absolute difference is returned instead of a ratio of rounding noise.
inline double gradient_mismatch(const Matrix& analytic, const Matrix& numeric, double zero = 1e-7) {
    if (std::max(analytic.norm(), numeric.norm()) < zero) return (analytic - numeric).norm();
    return relative_error(analytic, numeric);
}

/// Central differences with respect to a parameter matrix that f reads in place.
inline Matrix numeric_gradient_inplace(const std::function<double()>& f, Matrix& target, double step = 1e-5) {
    Matrix g(target.rows(), target.cols());
    for (Index i = 0; i < target.rows(); ++i) {
        for (Index j = 0; j < target.cols(); ++j) {
            const double keep = target(i, j);
            target(i, j) = keep + step;
            const double up = f();
            target(i, j) = keep - step;
            const double down = f();
            target(i, j) = keep;
            g(i, j) = (up - down) / (2.0 * step);
        }
    }
    return g;
}

/// Random undirected graph on n nodes stored with both directions per edge.
inline jmcppi::EdgeList random_symmetric_edges(Index n, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution b(p);
    jmcppi::EdgeList e;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            if (b(rng)) {
                e.push_back(i, j);
                e.push_back(j, i);
            }
        }
    }
    return e;
}

/// Attention coefficients written straight from the formula with scalar loops:
/// a_ij = exp(q_i . k_j) / sum_{k in N(i)} exp(q_i . k'_k), per head.
inline Matrix attention_oracle(const jmcppi::EdgeList& edges, const Matrix& x, const jmcppi::GatParams& p) {
    const int heads = p.heads;
    const Index w = p.query.value.cols() / heads;
    const Matrix q = x * p.query.value;
    const Matrix k = x * p.key.value;
    const Matrix kn = x * p.key_norm.value;
    Matrix a(static_cast<Index>(edges.size()), heads);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const Index s = edges.sources[e];
        const Index t = edges.targets[e];
        for (int h = 0; h < heads; ++h) {
            double num_logit = 0.0;
            for (Index c = 0; c < w; ++c) num_logit += q(t, h * w + c) * k(s, h * w + c);
            double denom = 0.0;
            for (std::size_t f = 0; f < edges.size(); ++f) {
                if (edges.targets[f] != t) continue;
                double l = 0.0;
                for (Index c = 0; c < w; ++c) l += q(t, h * w + c) * kn(edges.sources[f], h * w + c);
                denom += std::exp(l);
            }
            a(static_cast<Index>(e), h) = std::exp(num_logit) / denom;
        }
    }
    return a;
}

/// Brute-force confusion counts over the given column range.
struct Counts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts count_cells(const Matrix& pred, const Matrix& truth, Index c0, Index c1) {
    Counts k;
    for (Index i = 0; i < pred.rows(); ++i) {
        for (Index c = c0; c < c1; ++c) {
            const int p = static_cast<int>(pred(i, c));
            const int y = static_cast<int>(truth(i, c));
            if (p == 1 && y == 1) ++k.tp;
            if (p == 1 && y == 0) ++k.fp;
            if (p == 0 && y == 1) ++k.fn;
            if (p == 0 && y == 0) ++k.tn;
        }
    }
    return k;
}

/// Precision/recall at every distinct threshold, evaluated from scratch per threshold.
struct OraclePr {
    double threshold, precision, recall;
};

inline std::vector<OraclePr> pr_oracle(const Matrix& prob, const Matrix& truth) {
    std::set<double, std::greater<>> thresholds(prob.data(), prob.data() + prob.size());
    std::vector<OraclePr> out;
    for (double t : thresholds) {
        long long tp = 0, pp = 0, pos = 0;
        for (Index i = 0; i < prob.rows(); ++i) {
            for (Index c = 0; c < prob.cols(); ++c) {
                const bool p = prob(i, c) >= t;
                const bool y = truth(i, c) == 1.0;
                pp += p;
                pos += y;
                tp += p && y;
            }
        }
        out.push_back({t, pp == 0 ? 0.0 : double(tp) / double(pp), pos == 0 ? 1.0 : double(tp) / double(pos)});
    }
    return out;
}

/// Small run configuration used by the desk-scale training tests.
inline jmcppi::RunConfig desk_config(std::uint64_t seed) {
    jmcppi::RunConfig cfg;
    cfg.seed = seed;
    cfg.split_seed = seed;
    cfg.encoder = {32, 2, 2, 0.2};
    cfg.stage1_epochs = 20;
    cfg.interaction = {128, 3, 0.2};
    cfg.stage2_epochs = 200;
    return cfg;
}

}  // namespace testutil
