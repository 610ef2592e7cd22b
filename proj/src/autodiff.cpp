#include "jmcppi/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace jmcppi::ad {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw std::invalid_argument(std::string("ad::") + op + ": shape mismatch (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

void require_heads(Index cols, int heads, const char* op) {
    if (heads <= 0 || cols % heads != 0) {
        throw std::invalid_argument(std::string("ad::") + op + ": column count " + std::to_string(cols) +
                                    " is not divisible by head count " + std::to_string(heads));
    }
}

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::item() const {
    const Matrix& v = value();
    if (v.size() != 1) {
        throw std::logic_error("ad::Var::item: node is not 1x1");
    }
    return v(0, 0);
}

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    return push(std::move(node));
}

Var Tape::variable(Matrix value) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = true;
    return push(std::move(node));
}

Var Tape::parameter(Parameter& p) {
    Node node;
    node.value = p.value;
    node.param = &p;
    node.requires_grad = true;
    return push(std::move(node));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    Node node;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (in.tape_ != this) {
            throw std::logic_error("ad::Tape::record: input belongs to a different tape");
        }
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    return push(std::move(node));
}

void Tape::accumulate(const Var& v, const Matrix& g) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = g;
    } else {
        node.grad += g;
    }
}

void Tape::accumulate(const Var& v, Matrix&& g) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) {
        return;
    }
    if (node.grad.size() == 0) {
        node.grad = std::move(g);
    } else {
        node.grad += g;
    }
}

void Tape::backward(const Var& root) {
    if (root.tape_ != this || nodes_[root.id()].value.size() != 1) {
        throw std::invalid_argument("ad::Tape::backward: root must be a 1x1 node of this tape");
    }
    for (Node& node : nodes_) {
        node.grad.resize(0, 0);
    }
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.grad.size() == 0) {
            continue;
        }
        if (node.backward) {
            node.backward(*this, node.grad);
        }
        if (node.param != nullptr) {
            node.param->grad += node.grad;
        }
    }
}

Matrix Tape::gradient(const Var& v) const {
    const Node& node = nodes_[v.id()];
    if (node.grad.size() == 0) {
        return Matrix::Zero(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("ad::matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()) + ")");
    }
    Tape& t = a.tape();
    return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) tape.accumulate(a, g * b.value().transpose());
        if (tape.requires_grad(b)) tape.accumulate(b, a.value().transpose() * g);
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        tape.accumulate(b, g);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        if (tape.requires_grad(b)) tape.accumulate(b, -g);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) tape.accumulate(a, g.cwiseProduct(b.value()));
        if (tape.requires_grad(b)) tape.accumulate(b, g.cwiseProduct(a.value()));
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "div");
    return a.tape().record(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) tape.accumulate(a, g.cwiseQuotient(b.value()));
        if (tape.requires_grad(b)) {
            const Matrix& bv = b.value();
            tape.accumulate(b, -(g.cwiseProduct(a.value())).cwiseQuotient(bv.cwiseProduct(bv)));
        }
    });
}

Var scale(const Var& a, double factor) {
    return a.tape().record(a.value() * factor, {a},
                           [a, factor](Tape& tape, const Matrix& g) { tape.accumulate(a, g * factor); });
}

Var scale_by(const Var& a, const Var& s) {
    if (s.value().size() != 1) {
        throw std::invalid_argument("ad::scale_by: scale must be 1x1");
    }
    return a.tape().record(a.value() * s.item(), {a, s}, [a, s](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) tape.accumulate(a, g * s.item());
        if (tape.requires_grad(s)) tape.accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    });
}

Var add_scalar(const Var& a, double offset) {
    return a.tape().record(a.value().array() + offset, {a},
                           [a](Tape& tape, const Matrix& g) { tape.accumulate(a, g); });
}

Var add_row(const Var& a, const Var& bias) {
    if (bias.rows() != 1 || bias.cols() != a.cols()) {
        throw std::invalid_argument("ad::add_row: bias must be 1 x " + std::to_string(a.cols()));
    }
    Matrix out = a.value().rowwise() + bias.value().row(0);
    return a.tape().record(std::move(out), {a, bias}, [a, bias](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g);
        if (tape.requires_grad(bias)) tape.accumulate(bias, g.colwise().sum());
    });
}

Var relu(const Var& a) {
    return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape& tape, const Matrix& g) {
        tape.accumulate(a, (a.value().array() > 0.0).select(g, 0.0));
    });
}

Var exp(const Var& a) {
    Matrix out = a.value().array().exp();
    return a.tape().record(std::move(out), {a}, [a](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g.cwiseProduct(a.value().array().exp().matrix()));
    });
}

Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("ad::concat_cols: row counts differ");
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a.value(), b.value();
    const Index split = a.cols();
    return a.tape().record(std::move(out), {a, b}, [a, b, split](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) tape.accumulate(a, g.leftCols(split));
        if (tape.requires_grad(b)) tape.accumulate(b, g.rightCols(g.cols() - split));
    });
}

Var mean_rows(const Var& a) {
    if (a.rows() == 0) {
        throw std::invalid_argument("ad::mean_rows: empty input");
    }
    const Index n = a.rows();
    return a.tape().record(a.value().colwise().mean(), {a}, [a, n](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g.replicate(n, 1) / static_cast<double>(n));
    });
}

Var sum(const Var& a) {
    return a.tape().record(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](Tape& tape, const Matrix& g) {
        tape.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

Var mul_constant(const Var& a, const Matrix& mask) {
    require_same_shape(a.value(), mask, "mul_constant");
    return a.tape().record(a.value().cwiseProduct(mask), {a},
                           [a, mask](Tape& tape, const Matrix& g) { tape.accumulate(a, g.cwiseProduct(mask)); });
}

Var normalize_rows(const Var& a, double floor) {
    if (!(floor > 0.0)) throw std::invalid_argument("ad::normalize_rows: floor must be positive");
    const Eigen::VectorXd norms = a.value().rowwise().norm().cwiseMax(floor);
    Matrix out = a.value().array().colwise() / norms.array();
    return a.tape().record(out, {a}, [a, out, norms, floor](Tape& tape, const Matrix& g) {
        Matrix ga = g.array().colwise() / norms.array();
        for (Index i = 0; i < out.rows(); ++i) {
            // Rows at the floor are a plain scaling, so only the projection term differs.
            if (norms(i) > floor) ga.row(i) -= out.row(i) * (out.row(i).dot(g.row(i)) / norms(i));
        }
        tape.accumulate(a, std::move(ga));
    });
}

Var gather_rows(const Var& a, std::span<const Index> index) {
    const Index n = a.rows();
    for (Index i : index) {
        if (i < 0 || i >= n) {
            throw std::out_of_range("ad::gather_rows: index " + std::to_string(i) + " out of range");
        }
    }
    const auto e = static_cast<Index>(index.size());
    const Matrix& av = a.value();
    Matrix out(e, a.cols());
    for (Index c = 0; c < av.cols(); ++c) {
        for (Index i = 0; i < e; ++i) out(i, c) = av(index[static_cast<std::size_t>(i)], c);
    }
    std::vector<Index> idx(index.begin(), index.end());
    return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx), n](Tape& tape, const Matrix& g) {
        Matrix ga = Matrix::Zero(n, g.cols());
        const auto e = static_cast<Index>(idx.size());
        for (Index c = 0; c < g.cols(); ++c) {
            for (Index i = 0; i < e; ++i) ga(idx[static_cast<std::size_t>(i)], c) += g(i, c);
        }
        tape.accumulate(a, std::move(ga));
    });
}

Var scatter_add_rows(const Var& a, std::span<const Index> index, Index rows) {
    if (static_cast<Index>(index.size()) != a.rows()) {
        throw std::invalid_argument("ad::scatter_add_rows: index length differs from row count");
    }
    for (Index i : index) {
        if (i < 0 || i >= rows) {
            throw std::out_of_range("ad::scatter_add_rows: index " + std::to_string(i) + " out of range");
        }
    }
    const auto e = static_cast<Index>(index.size());
    const Matrix& av = a.value();
    Matrix out = Matrix::Zero(rows, a.cols());
    for (Index c = 0; c < av.cols(); ++c) {
        for (Index i = 0; i < e; ++i) out(index[static_cast<std::size_t>(i)], c) += av(i, c);
    }
    std::vector<Index> idx(index.begin(), index.end());
    return a.tape().record(std::move(out), {a}, [a, idx = std::move(idx)](Tape& tape, const Matrix& g) {
        const auto e = static_cast<Index>(idx.size());
        Matrix ga(e, g.cols());
        for (Index c = 0; c < g.cols(); ++c) {
            for (Index i = 0; i < e; ++i) ga(i, c) = g(idx[static_cast<std::size_t>(i)], c);
        }
        tape.accumulate(a, std::move(ga));
    });
}

Var head_dot(const Var& a, const Var& b, int heads) {
    require_same_shape(a.value(), b.value(), "head_dot");
    require_heads(a.cols(), heads, "head_dot");
    const Index width = a.cols() / heads;
    Matrix out(a.rows(), heads);
    for (int h = 0; h < heads; ++h) {
        out.col(h) = a.value().middleCols(h * width, width).cwiseProduct(b.value().middleCols(h * width, width))
                         .rowwise()
                         .sum();
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, heads, width](Tape& tape, const Matrix& g) {
        const bool need_a = tape.requires_grad(a);
        const bool need_b = tape.requires_grad(b);
        Matrix ga = need_a ? Matrix(a.rows(), a.cols()) : Matrix();
        Matrix gb = need_b ? Matrix(b.rows(), b.cols()) : Matrix();
        for (int h = 0; h < heads; ++h) {
            if (need_a) ga.middleCols(h * width, width) = b.value().middleCols(h * width, width).array().colwise() * g.col(h).array();
            if (need_b) gb.middleCols(h * width, width) = a.value().middleCols(h * width, width).array().colwise() * g.col(h).array();
        }
        if (need_a) tape.accumulate(a, ga);
        if (need_b) tape.accumulate(b, gb);
    });
}

Var head_scale(const Var& values, const Var& weights, int heads) {
    require_heads(values.cols(), heads, "head_scale");
    if (weights.rows() != values.rows() || weights.cols() != heads) {
        throw std::invalid_argument("ad::head_scale: weights must be rows x heads");
    }
    const Index width = values.cols() / heads;
    Matrix out(values.rows(), values.cols());
    for (int h = 0; h < heads; ++h) {
        out.middleCols(h * width, width) =
            values.value().middleCols(h * width, width).array().colwise() * weights.value().col(h).array();
    }
    return values.tape().record(
        std::move(out), {values, weights}, [values, weights, heads, width](Tape& tape, const Matrix& g) {
            if (tape.requires_grad(values)) {
                Matrix gv(g.rows(), g.cols());
                for (int h = 0; h < heads; ++h) {
                    gv.middleCols(h * width, width) =
                        g.middleCols(h * width, width).array().colwise() * weights.value().col(h).array();
                }
                tape.accumulate(values, gv);
            }
            if (tape.requires_grad(weights)) {
                Matrix gw(g.rows(), heads);
                for (int h = 0; h < heads; ++h) {
                    gw.col(h) = g.middleCols(h * width, width).cwiseProduct(values.value().middleCols(h * width, width))
                                    .rowwise()
                                    .sum();
                }
                tape.accumulate(weights, gw);
            }
        });
}

Var head_mean(const Var& a, int heads) {
    require_heads(a.cols(), heads, "head_mean");
    const Index width = a.cols() / heads;
    Matrix out = Matrix::Zero(a.rows(), width);
    for (int h = 0; h < heads; ++h) {
        out += a.value().middleCols(h * width, width);
    }
    out /= static_cast<double>(heads);
    return a.tape().record(std::move(out), {a}, [a, heads](Tape& tape, const Matrix& g) {
        tape.accumulate(a, g.replicate(1, heads) / static_cast<double>(heads));
    });
}

Var replace_rows(const Var& a, const Var& fill, std::span<const Index> rows) {
    if (fill.rows() != 1 || fill.cols() != a.cols()) {
        throw std::invalid_argument("ad::replace_rows: fill must be 1 x " + std::to_string(a.cols()));
    }
    Matrix out = a.value();
    for (Index r : rows) {
        if (r < 0 || r >= a.rows()) {
            throw std::out_of_range("ad::replace_rows: row " + std::to_string(r) + " out of range");
        }
        out.row(r) = fill.value().row(0);
    }
    std::vector<Index> idx(rows.begin(), rows.end());
    return a.tape().record(std::move(out), {a, fill}, [a, fill, idx = std::move(idx)](Tape& tape, const Matrix& g) {
        if (tape.requires_grad(a)) {
            Matrix ga = g;
            for (Index r : idx) ga.row(r).setZero();
            tape.accumulate(a, ga);
        }
        if (tape.requires_grad(fill)) {
            Matrix gf = Matrix::Zero(1, g.cols());
            for (Index r : idx) gf += g.row(r);
            tape.accumulate(fill, gf);
        }
    });
}

}  // namespace jmcppi::ad
