#include "jmcppi/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace jmcppi::nn {

void ParameterList::zero_grad() {
    for (ad::Parameter* p : params) {
        p->zero_grad();
    }
}

void ParameterList::append(const ParameterList& other) {
    params.insert(params.end(), other.params.begin(), other.params.end());
    buffers.insert(buffers.end(), other.buffers.begin(), other.buffers.end());
}

Matrix glorot_uniform(Index in, Index out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix w(in, out);
    for (Index i = 0; i < in; ++i) {
        for (Index j = 0; j < out; ++j) {
            w(i, j) = dist(rng);
        }
    }
    return w;
}

Linear::Linear(const std::string& name, Index in, Index out, Rng& rng)
    : weight(name + ".weight", glorot_uniform(in, out, rng)), bias(name + ".bias", Matrix::Zero(1, out)) {}

ad::Var Linear::forward(ad::Tape& tape, const ad::Var& x) {
    if (x.cols() != in_features()) {
        throw std::invalid_argument("Linear::forward: " + weight.name + " expects " + std::to_string(in_features()) +
                                    " input columns, got " + std::to_string(x.cols()));
    }
    return ad::add_row(ad::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

void Linear::register_into(ParameterList& list) {
    list.add(weight);
    list.add(bias);
}

BatchNorm::BatchNorm(const std::string& name, Index features)
    : gamma(name + ".gamma", Matrix::Ones(1, features)),
      beta(name + ".beta", Matrix::Zero(1, features)),
      running_mean(Matrix::Zero(1, features)),
      running_var(Matrix::Ones(1, features)) {}

ad::Var BatchNorm::forward(ad::Tape& tape, const ad::Var& x, bool training) {
    const Index n = x.rows();
    const Index f = x.cols();
    if (f != gamma.value.cols()) {
        throw std::invalid_argument("BatchNorm::forward: " + gamma.name + " expects " +
                                    std::to_string(gamma.value.cols()) + " columns, got " + std::to_string(f));
    }
    ad::Var g = tape.parameter(gamma);
    ad::Var b = tape.parameter(beta);

    if (!training || n < 2) {
        // A single row has no batch variance; fall back to running statistics like evaluation.
        const Matrix inv_std = (running_var.array() + eps).rsqrt().matrix();
        Matrix xhat = (x.value().rowwise() - running_mean.row(0)).array().rowwise() * inv_std.row(0).array();
        Matrix out = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
        return tape.record(std::move(out), {x, g, b},
                           [x, g, b, xhat, inv_std](ad::Tape& t, const Matrix& up) {
                               if (t.requires_grad(x)) {
                                   t.accumulate(x, (up.array().rowwise() *
                                                    (g.value().row(0).array() * inv_std.row(0).array()))
                                                       .matrix());
                               }
                               if (t.requires_grad(g)) t.accumulate(g, up.cwiseProduct(xhat).colwise().sum());
                               if (t.requires_grad(b)) t.accumulate(b, up.colwise().sum());
                           });
    }

    const RowVector mean = x.value().colwise().mean();
    const Matrix centered = x.value().rowwise() - mean;
    const RowVector var = centered.array().square().colwise().mean();
    const RowVector inv_std = (var.array() + eps).rsqrt();
    Matrix xhat = centered.array().rowwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();

    const double unbiased = static_cast<double>(n) / static_cast<double>(n - 1);
    running_mean = (1.0 - momentum) * running_mean + momentum * Matrix(mean);
    running_var = (1.0 - momentum) * running_var + momentum * Matrix(var * unbiased);

    return tape.record(std::move(out), {x, g, b}, [x, g, b, xhat, inv_std](ad::Tape& t, const Matrix& up) {
        if (t.requires_grad(x)) {
            // dx = inv_std * gamma * (up - mean(up) - xhat * mean(up * xhat))
            const Matrix dxhat = up.array().rowwise() * g.value().row(0).array();
            const RowVector mean_d = dxhat.colwise().mean();
            const RowVector mean_dx = dxhat.cwiseProduct(xhat).colwise().mean();
            Matrix dx = (dxhat.rowwise() - mean_d) - Matrix(xhat.array().rowwise() * mean_dx.array());
            dx = dx.array().rowwise() * inv_std.array();
            t.accumulate(x, dx);
        }
        if (t.requires_grad(g)) t.accumulate(g, up.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(b)) t.accumulate(b, up.colwise().sum());
    });
}

void BatchNorm::register_into(ParameterList& list) {
    list.add(gamma);
    list.add(beta);
    list.add_buffer(gamma.name.substr(0, gamma.name.size() - 6) + ".running_mean", running_mean);
    list.add_buffer(gamma.name.substr(0, gamma.name.size() - 6) + ".running_var", running_var);
}

ad::Var dropout(const ad::Var& x, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate > 1.0) {
        throw std::invalid_argument("dropout: rate must lie in [0, 1]");
    }
    if (!training || rate == 0.0) {
        return x;
    }
    if (rate == 1.0) {
        return ad::mul_constant(x, Matrix::Zero(x.rows(), x.cols()));
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    for (Index i = 0; i < mask.rows(); ++i) {
        for (Index j = 0; j < mask.cols(); ++j) {
            mask(i, j) = keep(rng) ? keep_scale : 0.0;
        }
    }
    return ad::mul_constant(x, mask);
}

AdamW::AdamW(ParameterList params, Options options) : params_(std::move(params)), options_(options) {
    first_.reserve(params_.params.size());
    second_.reserve(params_.params.size());
    for (const ad::Parameter* p : params_.params) {
        first_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
        second_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
}

void AdamW::step() {
    ++steps_;
    const double lr = options_.learning_rate;
    const double bias1 = 1.0 - std::pow(options_.beta1, static_cast<double>(steps_));
    const double bias2 = 1.0 - std::pow(options_.beta2, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params_.params.size(); ++i) {
        ad::Parameter& p = *params_.params[i];
        first_[i] = options_.beta1 * first_[i] + (1.0 - options_.beta1) * p.grad;
        second_[i] = options_.beta2 * second_[i] + (1.0 - options_.beta2) * p.grad.cwiseProduct(p.grad);
        if (lr == 0.0) {
            continue;
        }
        const Matrix m_hat = first_[i] / bias1;
        const Matrix v_hat = second_[i] / bias2;
        Matrix update = m_hat.array() / (v_hat.array().sqrt() + options_.eps);
        if (p.decay) {
            update += options_.weight_decay * p.value;
        }
        p.value -= lr * update;
    }
}

Snapshot Snapshot::capture(const ParameterList& list) {
    Snapshot s;
    for (const ad::Parameter* p : list.params) s.params.push_back(p->value);
    for (const auto& [name, m] : list.buffers) s.buffers.push_back(*m);
    return s;
}

void Snapshot::restore(const ParameterList& list) const {
    if (params.size() != list.params.size() || buffers.size() != list.buffers.size()) {
        throw std::logic_error("Snapshot::restore: parameter layout differs from the captured one");
    }
    for (std::size_t i = 0; i < params.size(); ++i) list.params[i]->value = params[i];
    for (std::size_t i = 0; i < buffers.size(); ++i) *list.buffers[i].second = buffers[i];
}

}  // namespace jmcppi::nn
