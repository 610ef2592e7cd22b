#pragma once

// Reverse-mode differentiation over dense row-major-agnostic Eigen matrices.
//
// A Tape records every operation as a node holding its forward value and a
// closure that pushes the upstream gradient into the node's inputs. Nodes are
// appended in evaluation order, so walking them backwards is a valid
// topological order. Parameters live outside the tape; binding one creates a
// leaf whose gradient is added into Parameter::grad after backward().

#include "jmcppi/types.hpp"

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace jmcppi::ad {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool decay = true;

    Parameter() = default;
    Parameter(std::string n, Matrix v, bool weight_decay = true)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())),
          decay(weight_decay) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
public:
    Var() = default;

    [[nodiscard]] const Matrix& value() const;
    [[nodiscard]] Index rows() const { return value().rows(); }
    [[nodiscard]] Index cols() const { return value().cols(); }
    [[nodiscard]] Tape& tape() const { return *tape_; }
    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] bool valid() const { return tape_ != nullptr; }
    /// Scalar value of a 1x1 node.
    [[nodiscard]] double item() const;

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, const Matrix& upstream)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    /// Leaf that requires a gradient; read it back with gradient() after backward().
    Var variable(Matrix value);
    Var parameter(Parameter& p);

    /// Appends an operation node. `backward` is dropped when no input requires a gradient.
    Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);

    /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every leaf.
    void backward(const Var& root);

    [[nodiscard]] const Matrix& value(const Var& v) const { return nodes_[v.id()].value; }
    [[nodiscard]] bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
    /// Gradient of the last backward() root with respect to `v` (zeros if unreached).
    [[nodiscard]] Matrix gradient(const Var& v) const;
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Adds `g` into the gradient slot of `v`; no-op when `v` does not require one.
    void accumulate(const Var& v, const Matrix& g);
    void accumulate(const Var& v, Matrix&& g);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

// Elementwise and linear-algebra primitives.
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
/// a * s for a 1x1 node s.
Var scale_by(const Var& a, const Var& s);
Var add_scalar(const Var& a, double offset);
/// a + 1 * bias for a 1 x cols(a) bias row.
Var add_row(const Var& a, const Var& bias);
Var relu(const Var& a);
Var exp(const Var& a);
Var concat_cols(const Var& a, const Var& b);
/// Column-wise mean over rows, producing a 1 x cols row.
Var mean_rows(const Var& a);
/// Sum of all entries as a 1x1 node.
Var sum(const Var& a);
/// Each row divided by max(its Euclidean norm, floor).
Var normalize_rows(const Var& a, double floor);
/// Elementwise multiplication by a fixed (non-differentiable) matrix.
Var mul_constant(const Var& a, const Matrix& mask);

// Graph primitives.
/// Row i of the result is row index[i] of a.
Var gather_rows(const Var& a, std::span<const Index> index);
/// Row index[i] of the result accumulates row i of a; result has `rows` rows.
Var scatter_add_rows(const Var& a, std::span<const Index> index, Index rows);
/// Per-head dot products: a and b are E x (heads * width); result E x heads.
Var head_dot(const Var& a, const Var& b, int heads);
/// Scales each head block of values (E x heads*width) by weights (E x heads).
Var head_scale(const Var& values, const Var& weights, int heads);
/// Averages head blocks: N x (heads * width) -> N x width.
Var head_mean(const Var& a, int heads);
/// Replaces the listed rows of a by the 1 x cols row `fill`.
Var replace_rows(const Var& a, const Var& fill, std::span<const Index> rows);

}  // namespace jmcppi::ad
