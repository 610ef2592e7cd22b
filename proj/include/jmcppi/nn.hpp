#pragma once

#include "jmcppi/autodiff.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace jmcppi::nn {

using Rng = std::mt19937_64;

/// Flat view over every trainable parameter and persistent buffer of a model.
struct ParameterList {
    std::vector<ad::Parameter*> params;
    std::vector<std::pair<std::string, Matrix*>> buffers;

    void add(ad::Parameter& p) { params.push_back(&p); }
    void add_buffer(std::string name, Matrix& m) { buffers.emplace_back(std::move(name), &m); }
    void zero_grad();
    void append(const ParameterList& other);
};

/// Glorot-uniform weight matrix of shape in x out.
Matrix glorot_uniform(Index in, Index out, Rng& rng);

/// Row-wise affine map x * W + b, with W stored as in x out.
struct Linear {
    ad::Parameter weight;
    ad::Parameter bias;

    Linear() = default;
    Linear(const std::string& name, Index in, Index out, Rng& rng);

    [[nodiscard]] Index in_features() const { return weight.value.rows(); }
    [[nodiscard]] Index out_features() const { return weight.value.cols(); }

    ad::Var forward(ad::Tape& tape, const ad::Var& x);
    void register_into(ParameterList& list);
};

/// Per-column batch normalization with learnable scale/shift and running statistics.
struct BatchNorm {
    ad::Parameter gamma;
    ad::Parameter beta;
    Matrix running_mean;
    Matrix running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm() = default;
    BatchNorm(const std::string& name, Index features);

    /// Training mode normalizes with batch statistics and updates the running ones;
    /// evaluation mode uses the running statistics.
    ad::Var forward(ad::Tape& tape, const ad::Var& x, bool training);
    void register_into(ParameterList& list);
};

/// Inverted dropout. Identity when not training or rate == 0; all zeros when rate == 1.
ad::Var dropout(const ad::Var& x, double rate, bool training, Rng& rng);

/// Adam with decoupled weight decay applied to parameters flagged `decay`.
class AdamW {
public:
    struct Options {
        double learning_rate = 1e-3;
        double weight_decay = 1e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    AdamW(ParameterList params, Options options);

    void step();
    void zero_grad() { params_.zero_grad(); }
    [[nodiscard]] const Options& options() const { return options_; }

private:
    ParameterList params_;
    Options options_;
    std::vector<Matrix> first_;
    std::vector<Matrix> second_;
    long steps_ = 0;
};

/// Deep copy of parameter values and buffers, used for best-checkpoint retention.
struct Snapshot {
    std::vector<Matrix> params;
    std::vector<Matrix> buffers;

    static Snapshot capture(const ParameterList& list);
    void restore(const ParameterList& list) const;
};

}  // namespace jmcppi::nn
