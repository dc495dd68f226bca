#include <gtest/gtest.h>

#include <cmath>

#include "txlr/numerics/checkpoint.hpp"
#include "txlr/numerics/grad_check.hpp"
#include "txlr/numerics/ops.hpp"

using namespace txlr;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::matrix(r, c);
    for (auto& v : t.values()) v = rng.normal(0.0, scale);
    return t;
}

// Checks d(sum(out * probe))/d(inputs) against central differences.
void expect_op_gradients(ParameterSet<double>& params, const std::function<Var<double>()>& op) {
    Rng rng("probe", 7);
    const auto shape = op().shape();
    Tensor<double> probe(shape);
    for (auto& v : probe.values()) v = rng.normal();
    auto f = [&] { return ops::sum(ops::mul(op(), constant(probe))); };
    GradCheckOptions opts;
    opts.epsilon = 1e-6;
    opts.tolerance = 1e-4;
    auto report = grad_check<double>(f, params, opts);
    EXPECT_TRUE(report.pass) << "max relative error " << report.max_rel_error;
}

}  // namespace

TEST(Ops, SoftmaxOfZerosIsUniform) {
    auto s = ops::softmax(constant(Tensor<double>({1, 3}, 0.0)));
    for (double v : s.value().values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Ops, SigmoidOfZeroIsHalf) {
    EXPECT_EQ(ops::sigmoid(constant(Tensor<double>({1, 1}, 0.0))).item(), 0.5);
}

TEST(Ops, SoftmaxRowsSumToOneAndLogSoftmaxAgrees) {
    Rng rng("t", 1);
    auto x = constant(random_matrix(6, 11, rng, 5.0));
    auto s = ops::softmax(x);
    auto ls = ops::log_softmax(x);
    for (std::size_t r = 0; r < 6; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 11; ++c) {
            sum += s.value().at(r, c);
            EXPECT_NEAR(ls.value().at(r, c), std::log(s.value().at(r, c)), 1e-6);
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(Ops, DropoutOffIsBitExactIdentity) {
    Rng rng("t", 2);
    auto x = leaf(random_matrix(4, 5, rng));
    auto y = ops::dropout(x, 0.3, false, rng);
    EXPECT_EQ(y.value(), x.value());
}

TEST(Ops, DropoutTrainUsesInvertedScaling) {
    Rng rng("t", 3);
    auto x = constant(Tensor<double>({200, 50}, 1.0));
    auto y = ops::dropout(x, 0.3, true, rng);
    double mean = 0.0;
    for (double v : y.value().values()) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.7) < 1e-12);
        mean += v;
    }
    EXPECT_NEAR(mean / 10000.0, 1.0, 0.05);
}

TEST(Ops, MaskedCrossEntropyAllFalseIsZeroWithZeroGradient) {
    Rng rng("t", 4);
    auto logits = leaf(random_matrix(3, 5, rng));
    auto loss = ops::masked_cross_entropy(logits, {1, 2, 3}, {false, false, false});
    EXPECT_EQ(loss.item(), 0.0);
    backward(loss);
    const auto grad = logits.grad();
    for (double g : grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Ops, ShapeMismatchNamesOperationAndShapes) {
    auto a = constant(Tensor<double>::matrix(2, 3));
    auto b = constant(Tensor<double>::matrix(4, 5));
    try {
        ops::matmul(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        EXPECT_NE(msg.find("matmul"), std::string::npos);
        EXPECT_NE(msg.find("[2x3]"), std::string::npos);
        EXPECT_NE(msg.find("[4x5]"), std::string::npos);
    }
    EXPECT_THROW(ops::add(a, b), ShapeError);
    EXPECT_THROW(ops::concat_rows(a, b), ShapeError);
}

TEST(Ops, RelativeGatherPlacesDistances) {
    // 2 queries after 1 memory slot; column d of the input is distance d.
    Tensor<double> in({2, 3}, std::vector<double>{10, 11, 12, 20, 21, 22});
    auto out = ops::relative_gather(constant(in), 1).value();
    // query 0 sits at absolute 1: keys 0,1 at distances 1,0
    EXPECT_EQ(out.at(0, 0), 11);
    EXPECT_EQ(out.at(0, 1), 10);
    EXPECT_EQ(out.at(0, 2), 0);
    // query 1 at absolute 2: keys 0,1,2 at distances 2,1,0
    EXPECT_EQ(out.at(1, 0), 22);
    EXPECT_EQ(out.at(1, 1), 21);
    EXPECT_EQ(out.at(1, 2), 20);
}

// Every primitive's Jacobian against finite differences on random shapes.
TEST(OpsGradients, PrimitivesMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng("shapes", seed);
        const std::size_t r = 2 + rng.uniform_index(3), k = 2 + rng.uniform_index(4), c = 2 + rng.uniform_index(4);
        ParameterSet<double> ps;
        auto a = ps.add("a", random_matrix(r, k, rng));
        auto b = ps.add("b", random_matrix(k, c, rng));
        auto bt = ps.add("bt", random_matrix(c, k, rng));
        auto a2 = ps.add("a2", random_matrix(r, k, rng));
        auto bias = ps.add("bias", random_matrix(1, k, rng));
        auto gain = ps.add("gain", random_matrix(1, k, rng));
        auto table = ps.add("table", random_matrix(5, k, rng));

        expect_op_gradients(ps, [&] { return ops::matmul(a, b); });
        expect_op_gradients(ps, [&] { return ops::matmul(a, bt, false, true); });
        expect_op_gradients(ps, [&] { return ops::matmul(a, a2, true, false); });
        expect_op_gradients(ps, [&] { return ops::matmul(b, a, true, true); });
        expect_op_gradients(ps, [&] { return ops::add(a, a2); });
        expect_op_gradients(ps, [&] { return ops::add_bias(a, bias); });
        expect_op_gradients(ps, [&] { return ops::mul(a, a2); });
        expect_op_gradients(ps, [&] { return ops::scale(a, 0.37); });
        expect_op_gradients(ps, [&] { return ops::concat_rows(a, a2); });
        expect_op_gradients(ps, [&] { return ops::concat_cols(a, b.rows() == a.rows() ? b : a2); });
        expect_op_gradients(ps, [&] { return ops::slice_rows(a, 1, r - 1); });
        expect_op_gradients(ps, [&] { return ops::slice_cols(a, 1, k - 1); });
        expect_op_gradients(ps, [&] { return ops::repeat_rows(bias, 3); });
        expect_op_gradients(ps, [&] { return ops::stack_rows<double>({bias, gain, bias}); });
        expect_op_gradients(ps, [&] { return ops::embedding_lookup(table, {0, 3, 3, 1}); });
        expect_op_gradients(ps, [&] { return ops::softmax(a); });
        expect_op_gradients(ps, [&] { return ops::log_softmax(a); });
        expect_op_gradients(ps, [&] { return ops::sigmoid(a); });
        expect_op_gradients(ps, [&] { return ops::tanh(a); });
        expect_op_gradients(ps, [&] { return ops::relu(a); });
        expect_op_gradients(ps, [&] { return ops::layer_norm(a, gain, bias); });
        expect_op_gradients(ps, [&] { return ops::softmax(ops::causal_mask(ops::matmul(a, a2, false, true), 0)); });
        expect_op_gradients(ps, [&] { return ops::relative_gather(ops::matmul(a, a2, false, true), 0); });
        std::vector<int> targets(r);
        std::vector<bool> mask(r);
        for (std::size_t i = 0; i < r; ++i) targets[i] = static_cast<int>(rng.uniform_index(k)), mask[i] = i % 2 == 0;
        expect_op_gradients(ps, [&] { return ops::masked_cross_entropy(a, targets, mask); });
    }
}

TEST(GradCheck, SquareAtThree) {
    ParameterSet<double> ps;
    auto x = ps.add("x", Tensor<double>({1, 1}, 3.0));
    GradCheckOptions opts;
    opts.tolerance = 1e-6;
    auto report = grad_check<double>([&] { return ops::mul(x, x); }, ps, opts);
    EXPECT_TRUE(report.pass);
    backward(ops::mul(x, x));
    EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(GradCheck, ConstantFunctionHasZeroGradients) {
    ParameterSet<double> ps;
    auto x = ps.add("x", Tensor<double>({2, 2}, 1.5));
    auto f = [&] { return constant(Tensor<double>({1, 1}, 4.0)); };
    auto report = grad_check<double>(f, ps);
    EXPECT_TRUE(report.pass);
    EXPECT_EQ(report.params[0].max_abs_grad, 0.0);
}

TEST(GradCheck, KinkInsideTheStepIsResolvedBySmallerSteps) {
    ParameterSet<double> ps;
    auto x = ps.add("x", Tensor<double>({1, 1}, 0.0));
    // relu(x + 5e-7) has its kink just left of the probe point.
    auto f = [&] { return ops::relu(ops::add(x, constant(Tensor<double>({1, 1}, 5e-7)))); };
    GradCheckOptions opts;
    opts.epsilon = 1e-5;
    EXPECT_FALSE(grad_check<double>(f, ps, opts).pass);
    opts.refine_steps = 2;
    const auto report = grad_check<double>(f, ps, opts);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
    EXPECT_EQ(report.params[0].refined, 1u);
}

TEST(GradCheck, WrongGradientFailsAtEveryStep) {
    ParameterSet<double> ps;
    auto x = ps.add("x", Tensor<double>({1, 1}, 2.0));
    // value x^2, backward claims 3x
    auto f = [&] {
        Tensor<double> v = x.value();
        v[0] = v[0] * v[0];
        return Var<double>::make(std::move(v), {x}, [](Node<double>& self) {
            self.parents[0]->grad_buffer()[0] += 3.0 * self.parents[0]->value[0] * self.grad[0];
        });
    };
    GradCheckOptions opts;
    opts.refine_steps = 3;
    EXPECT_FALSE(grad_check<double>(f, ps, opts).pass);
}

TEST(GradCheck, NonFiniteValuesAreReported) {
    ParameterSet<double> ps;
    auto x = ps.add("weights", Tensor<double>({1, 1}, -1.0));
    auto f = [&] {
        Tensor<double> t = x.value();
        t[0] = std::log(t[0]);
        return constant(t);
    };
    EXPECT_THROW(grad_check<double>(f, ps), NumericError);
}

TEST(Checkpoint, RoundTripsNamesShapesAndValues) {
    Rng rng("t", 9);
    ParameterSet<float> ps;
    ps.add("w", random_matrix(3, 4, rng).cast<float>());
    ps.add("b", Tensor<float>({4}, 0.5f), false);
    BinaryWriter w;
    write_checkpoint(w, ps, 1234u, R"({"k":1})");

    ParameterSet<double> loaded;
    loaded.add("w", Tensor<double>::matrix(3, 4));
    loaded.add("b", Tensor<double>({4}));
    BinaryReader r(w.bytes());
    auto header = read_checkpoint_header(r);
    EXPECT_EQ(header.fingerprint, 1234u);
    EXPECT_EQ(header.scalar_width, 4u);
    EXPECT_EQ(header.metadata, R"({"k":1})");
    read_checkpoint_params(r, header, loaded);
    EXPECT_TRUE(r.at_end());
    for (std::size_t i = 0; i < 12; ++i)
        EXPECT_EQ(static_cast<float>(loaded.get("w").var.value()[i]), ps.get("w").var.value()[i]);
    EXPECT_FALSE(loaded.get("b").trainable);
}

TEST(Checkpoint, ShapeMismatchIsRejected) {
    ParameterSet<double> ps;
    ps.add("w", Tensor<double>::matrix(2, 2));
    BinaryWriter w;
    write_checkpoint(w, ps, 0u, "{}");
    ParameterSet<double> other;
    other.add("w", Tensor<double>::matrix(3, 2));
    BinaryReader r(w.bytes());
    auto h = read_checkpoint_header(r);
    EXPECT_THROW(read_checkpoint_params(r, h, other), DataError);
}

TEST(Rng, SerializationResumesTheStream) {
    Rng a("stream", 42);
    a.normal();
    Rng b = Rng::deserialize(a.serialize());
    EXPECT_EQ(a.normal(), b.normal());
    EXPECT_EQ(b.name(), "stream");
}
