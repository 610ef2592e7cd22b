#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace jmcppi;
using testutil::numeric_gradient;
using testutil::random_matrix;
using testutil::relative_error;

namespace {

// Gradient of sum(op(x) * weights) from the tape versus central differences.
double op_gradient_error(const std::function<ad::Var(ad::Tape&, const ad::Var&)>& op, const Matrix& x0,
                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Matrix weights;
    {
        ad::Tape probe;
        weights = random_matrix(op(probe, probe.constant(x0)).rows(), op(probe, probe.constant(x0)).cols(), rng);
    }
    auto value = [&](const Matrix& x) {
        ad::Tape t;
        return op(t, t.constant(x)).value().cwiseProduct(weights).sum();
    };
    ad::Tape tape;
    ad::Var x = tape.variable(x0);
    ad::Var loss = ad::sum(ad::mul_constant(op(tape, x), weights));
    tape.backward(loss);
    return relative_error(tape.gradient(x), numeric_gradient(value, x0));
}

}  // namespace

TEST(Autodiff, ElementwiseAndMatrixOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    const Matrix b = random_matrix(4, 3, rng);
    const Matrix row = random_matrix(1, 3, rng);
    const Matrix positive = random_matrix(5, 3, rng).array().abs() + 0.5;
    const Matrix x0 = random_matrix(5, 4, rng);
    const Matrix y0 = random_matrix(5, 3, rng);

    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::matmul(x, t.constant(b)); }, x0, 1),
              1e-6);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::add_row(x, t.constant(row)); }, y0, 2),
              1e-6);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::div(x, t.constant(positive)); }, y0, 3),
              1e-6);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::div(t.constant(y0), ad::exp(x)); },
                                y0, 4),
              1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::mul(x, ad::exp(x)); }, y0, 5), 1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::relu(x); }, y0, 6), 1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::concat_cols(x, ad::scale(x, 2.0)); },
                                y0, 7),
              1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::mean_rows(x); }, y0, 8), 1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::add_scalar(ad::sub(x, x), 1.0); }, y0, 9),
              1e-6);
    EXPECT_LT(op_gradient_error(
                  [](ad::Tape&, const ad::Var& x) { return ad::scale_by(x, ad::sum(ad::mul(x, x))); }, y0, 10),
              1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::normalize_rows(x, 1e-8); }, y0, 11),
              1e-6);
}

TEST(Autodiff, IndexingAndHeadOpsMatchFiniteDifferences) {
    std::mt19937_64 rng(4);
    const Matrix x0 = random_matrix(4, 6, rng);
    const std::vector<Index> idx{2, 0, 2, 3, 1};
    EXPECT_LT(op_gradient_error([&](ad::Tape&, const ad::Var& x) { return ad::gather_rows(x, idx); }, x0, 1), 1e-6);
    const Matrix e0 = random_matrix(5, 6, rng);
    EXPECT_LT(op_gradient_error([&](ad::Tape&, const ad::Var& x) { return ad::scatter_add_rows(x, idx, 4); }, e0, 2),
              1e-6);
    const Matrix other = random_matrix(5, 6, rng);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::head_dot(x, t.constant(other), 3); },
                                e0, 3),
              1e-6);
    const Matrix w0 = random_matrix(5, 3, rng);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::head_scale(t.constant(other), x, 3); },
                                w0, 4),
              1e-6);
    EXPECT_LT(op_gradient_error([&](ad::Tape& t, const ad::Var& x) { return ad::head_scale(x, t.constant(w0), 3); },
                                e0, 5),
              1e-6);
    EXPECT_LT(op_gradient_error([](ad::Tape&, const ad::Var& x) { return ad::head_mean(x, 2); }, e0, 6), 1e-6);
    const std::vector<Index> rows{1, 3};
    EXPECT_LT(op_gradient_error(
                  [&](ad::Tape& t, const ad::Var& x) { return ad::replace_rows(x, t.constant(Matrix::Ones(1, 6)), rows); },
                  x0, 7),
              1e-6);
}

TEST(Autodiff, ReplaceRowsRoutesFillGradientToTheFillRow) {
    ad::Tape tape;
    ad::Var x = tape.variable(Matrix::Zero(4, 2));
    ad::Var fill = tape.variable(Matrix::Zero(1, 2));
    const std::vector<Index> rows{0, 2};
    tape.backward(ad::sum(ad::replace_rows(x, fill, rows)));
    EXPECT_EQ(tape.gradient(fill), Matrix::Constant(1, 2, 2.0));
    Matrix expected(4, 2);
    expected << 0, 0, 1, 1, 0, 0, 1, 1;
    EXPECT_EQ(tape.gradient(x), expected);
}

TEST(Autodiff, NormalizeRowsHasUnitRowsAndKeepsZeroRowsFinite) {
    Matrix x(3, 2);
    x << 3, 4, 0, 0, -1, 0;
    ad::Tape tape;
    const ad::Var v = tape.variable(x);
    const ad::Var n = ad::normalize_rows(v, 1e-8);
    EXPECT_NEAR(n.value().row(0).norm(), 1.0, 1e-15);
    EXPECT_EQ(n.value().row(1).norm(), 0.0);
    tape.backward(ad::sum(n));
    EXPECT_TRUE(tape.gradient(v).allFinite());
}

TEST(Autodiff, IndexOpsRejectOutOfRangeRows) {
    ad::Tape tape;
    ad::Var x = tape.variable(Matrix::Zero(2, 2));
    const std::vector<Index> bad{0, 2};
    EXPECT_THROW(ad::gather_rows(x, bad), std::out_of_range);
    EXPECT_THROW(ad::scatter_add_rows(x, bad, 2), std::out_of_range);
}

TEST(Autodiff, ParameterGradientsAccumulateAcrossUses) {
    ad::Parameter p("p", Matrix::Constant(1, 1, 3.0));
    ad::Tape tape;
    ad::Var a = tape.parameter(p);
    ad::Var b = tape.parameter(p);
    tape.backward(ad::mul(a, b));
    EXPECT_DOUBLE_EQ(p.grad(0, 0), 6.0);
}

TEST(Nn, LinearAndBatchNormMatchFiniteDifferences) {
    std::mt19937_64 rng(9);
    nn::Rng init(1);
    nn::Linear fc("fc", 4, 3, init);
    nn::BatchNorm bn("bn", 3);
    bn.gamma.value = random_matrix(1, 3, rng);
    bn.beta.value = random_matrix(1, 3, rng);
    const Matrix x0 = random_matrix(6, 4, rng);
    const Matrix weights = random_matrix(6, 3, rng);

    auto forward = [&](ad::Tape& t) { return ad::sum(ad::mul_constant(bn.forward(t, fc.forward(t, t.constant(x0)), true), weights)); };
    auto value = [&] {
        ad::Tape t;
        return forward(t).item();
    };
    fc.weight.zero_grad();
    fc.bias.zero_grad();
    bn.gamma.zero_grad();
    bn.beta.zero_grad();
    ad::Tape tape;
    tape.backward(forward(tape));
    for (ad::Parameter* p : {&fc.weight, &fc.bias, &bn.gamma, &bn.beta}) {
        const Matrix analytic = p->grad;
        EXPECT_LT(testutil::gradient_mismatch(analytic, testutil::numeric_gradient_inplace(value, p->value)), 1e-6)
            << p->name;
    }
    // Batch norm removes any per-column shift, so the bias of the layer before it gets no gradient.
    EXPECT_LT(fc.bias.grad.norm(), 1e-12);
}

TEST(Nn, BatchNormEvalModeUsesRunningStatistics) {
    nn::BatchNorm bn("bn", 2);
    bn.running_mean = Matrix::Constant(1, 2, 1.0);
    bn.running_var = Matrix::Constant(1, 2, 4.0 - bn.eps);
    ad::Tape tape;
    const ad::Var out = bn.forward(tape, tape.constant(Matrix::Constant(3, 2, 5.0)), false);
    EXPECT_TRUE(out.value().isApprox(Matrix::Constant(3, 2, 2.0), 1e-12));
}

TEST(Nn, DropoutRateOneZeroesAndEvalIsIdentity) {
    nn::Rng rng(1);
    ad::Tape tape;
    const Matrix x = Matrix::Constant(3, 4, 2.0);
    EXPECT_EQ(nn::dropout(tape.constant(x), 1.0, true, rng).value(), Matrix::Zero(3, 4));
    EXPECT_EQ(nn::dropout(tape.constant(x), 0.2, false, rng).value(), x);
}

TEST(Nn, AdamWWithZeroLearningRateLeavesParametersUnchanged) {
    ad::Parameter p("p", Matrix::Constant(2, 2, 1.5));
    p.grad.setConstant(3.0);
    nn::ParameterList list;
    list.add(p);
    nn::AdamW opt(list, {0.0, 1e-4});
    opt.step();
    EXPECT_EQ(p.value, Matrix::Constant(2, 2, 1.5));
}

TEST(Nn, AdamWFirstStepMovesAgainstTheGradientByTheLearningRate) {
    ad::Parameter p("p", Matrix::Zero(1, 2), false);
    p.grad << 2.0, -0.5;
    nn::ParameterList list;
    list.add(p);
    nn::AdamW opt(list, {0.1, 0.0});
    opt.step();
    EXPECT_NEAR(p.value(0, 0), -0.1, 1e-6);
    EXPECT_NEAR(p.value(0, 1), 0.1, 1e-6);
}

TEST(Nn, SnapshotRestoresParametersAndBuffers) {
    nn::BatchNorm bn("bn", 2);
    nn::ParameterList list;
    bn.register_into(list);
    const nn::Snapshot snap = nn::Snapshot::capture(list);
    bn.gamma.value.setConstant(7.0);
    bn.running_mean.setConstant(3.0);
    snap.restore(list);
    EXPECT_EQ(bn.gamma.value, Matrix::Ones(1, 2));
    EXPECT_EQ(bn.running_mean, Matrix::Zero(1, 2));
}
