#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sadmil/gradcheck.hpp"
#include "sadmil/tape.hpp"

using namespace sadmil;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = u(rng);
    return t;
}

// Random composition of the primitives over a 3x4 input and a 4x2 weight.
Var random_graph(Tape& tape, std::span<const Var> in, unsigned seed) {
    std::mt19937 pick(seed);
    Var x = matmul(in[0], in[1]);  // 3x2
    for (int step = 0; step < 4; ++step) {
        switch (pick() % 7) {
            case 0: x = tanh(x); break;
            case 1: x = sigmoid(x); break;
            case 2: x = square(scale(x, 0.5)); break;
            case 3: x = exp(scale(x, 0.3)); break;
            case 4: x = add(x, mul(x, sigmoid(x))); break;
            case 5: x = sub(x, tanh(x)); break;
            case 6: x = log(add(square(x), tape.constant(Tensor::filled(x.shape(), 1.0)))); break;
        }
    }
    Var a = sum(reduce(Reduction::mean, x, 0));
    Var b = sum(reduce(Reduction::max, x, 1));
    Var c = sum(softmax(reshape(x, {x.value().size()})) * reshape(x, {x.value().size()}));
    return add(add(a, b), c);
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    Tape t;
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Var y = matmul(t.variable(a), t.constant(Tensor::matrix({{1, 0}, {0, 1}})));
    EXPECT_EQ(y.value(), a);
}

TEST(Matmul, RowTimesColumn) {
    Tape t;
    const Var y = matmul(t.variable(Tensor::matrix({{1, 2}})), t.variable(Tensor::matrix({{3}, {4}})));
    EXPECT_EQ(y.value(), Tensor::matrix({{11}}));
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferenceOracle) {
    // Central differences (step 1e-6) in double precision give [2, 5].
    Tape t;
    const Var a = t.variable(Tensor::matrix({{1, 1}}));
    const Var b = t.variable(Tensor::matrix({{2}, {5}}));
    const Gradients g = t.backward(sum(matmul(a, b)));
    EXPECT_NEAR(g[a][0], 2.0, 1e-9);
    EXPECT_NEAR(g[a][1], 5.0, 1e-9);
    EXPECT_NEAR(g[b][0], 1.0, 1e-12);
    EXPECT_NEAR(g[b][1], 1.0, 1e-12);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tape t;
    const Var a = t.variable(Tensor::zeros({2, 3}));
    const Var b = t.variable(Tensor::zeros({2, 3}));
    try {
        matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("[2x3] and [2x3]"), std::string::npos);
    }
}

TEST(Elementwise, SigmoidAndTanhAtZero) {
    Tape t;
    const Var x = t.variable(Tensor::scalar(0.0));
    EXPECT_DOUBLE_EQ(sigmoid(x).value().item(), 0.5);
    EXPECT_DOUBLE_EQ(tanh(x).value().item(), 0.0);
    EXPECT_DOUBLE_EQ(elementwise(Elementwise::sigmoid, x).value().item(), 0.5);
}

TEST(Elementwise, TanhDerivativeAtOne) {
    // Finite-difference oracle: 0.41997434163665304; closed form 1 - tanh(1)^2.
    Tape t;
    const Var x = t.variable(Tensor::scalar(1.0));
    const double g = t.backward(tanh(x))[x].item();
    EXPECT_NEAR(g, 0.41997434161402614, 1e-15);
    EXPECT_NEAR(g, 0.41997434163665304, 1e-9);
}

TEST(Elementwise, LogOfNonPositiveReportsIndex) {
    Tape t;
    const Var x = t.variable(Tensor::vector({1.0, 2.0, 0.0}));
    try {
        log(x);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_NE(std::string(e.what()).find("index 2"), std::string::npos);
    }
}

TEST(Elementwise, BinaryShapeMismatchThrows) {
    Tape t;
    EXPECT_THROW(add(t.variable(Tensor::zeros({2})), t.variable(Tensor::zeros({3}))), DimensionError);
    EXPECT_THROW(mul(t.variable(Tensor::zeros({2, 1})), t.variable(Tensor::zeros({1, 2}))), DimensionError);
}

TEST(Elementwise, SigmoidStaysFiniteForLargeInputs) {
    Tape t;
    const Var y = sigmoid(t.variable(Tensor::vector({-800.0, 800.0})));
    EXPECT_TRUE(y.value().all_finite());
    EXPECT_DOUBLE_EQ(y.value()[0], 0.0);
    EXPECT_DOUBLE_EQ(y.value()[1], 1.0);
}

TEST(Reduce, SumMaxMean) {
    Tape t;
    const Var x = t.variable(Tensor::vector({1, 2, 3}));
    EXPECT_DOUBLE_EQ(sum(x, 0).value().item(), 6.0);

    const Var m = t.variable(Tensor::vector({3, 1, 3}));
    const Var mx = max(m, 0);
    EXPECT_DOUBLE_EQ(mx.value().item(), 3.0);
    EXPECT_EQ(t.backward(mx)[m], Tensor::vector({1, 0, 0}));

    const Var a = t.variable(Tensor::vector({2, 4}));
    const Var me = mean(a, 0);
    EXPECT_DOUBLE_EQ(me.value().item(), 3.0);
    EXPECT_EQ(t.backward(me)[a], Tensor::vector({0.5, 0.5}));
}

TEST(Reduce, AlongMatrixAxes) {
    Tape t;
    const Var z = t.variable(Tensor::matrix({{1, 5}, {3, 2}}));
    EXPECT_EQ(max(z, 0).value(), Tensor::matrix({{3, 5}}));
    EXPECT_EQ(mean(z, 0).value(), Tensor::matrix({{2, 3.5}}));
    EXPECT_EQ(sum(z, 1).value(), Tensor::matrix({{6}, {5}}));
}

TEST(Reduce, InvalidAxisThrows) {
    Tape t;
    EXPECT_THROW(sum(t.variable(Tensor::zeros({3})), 1), DimensionError);
}

TEST(Backward, SquareOfLeaf) {
    Tape t;
    const Var x = t.variable(Tensor::scalar(3.0));
    EXPECT_DOUBLE_EQ(t.backward(x * x)[x].item(), 6.0);
}

TEST(Backward, ConstantRootGivesZeroGradients) {
    Tape t;
    const Var x = t.variable(Tensor::vector({1, 2}));
    const Var c = t.constant(Tensor::scalar(4.0));
    EXPECT_EQ(t.backward(scale(c, 2.0))[x], Tensor::zeros({2}));
}

TEST(Backward, UnusedLeafGetsZeros) {
    Tape t;
    const Var x = t.variable(Tensor::vector({1, 2}));
    const Var unused = t.variable(Tensor::matrix({{1, 2}, {3, 4}}));
    const Gradients g = t.backward(sum(square(x)));
    EXPECT_EQ(g[unused], Tensor::zeros({2, 2}));
}

TEST(Backward, RootOfRootIsOne) {
    Tape t;
    const Var x = t.variable(Tensor::scalar(0.7));
    EXPECT_DOUBLE_EQ(t.backward(x)[x].item(), 1.0);
}

TEST(Backward, NonScalarRootRejected) {
    Tape t;
    const Var x = t.variable(Tensor::vector({1, 2}));
    EXPECT_THROW(t.backward(square(x)), DimensionError);
}

TEST(Backward, RootFromAnotherTapeRejected) {
    Tape t1, t2;
    const Var x = t1.variable(Tensor::scalar(1.0));
    EXPECT_THROW(t2.backward(x), Error);
}

TEST(Backward, TapeIsTopologicallyOrdered) {
    Tape t;
    std::mt19937_64 rng(1);
    const Var w = t.variable(random_tensor({4, 2}, rng));
    const Var x = t.variable(random_tensor({3, 4}, rng));
    const Var in[] = {x, w};
    random_graph(t, in, 3);
    for (std::size_t k = 0; k < t.size(); ++k)
        for (auto i : t.inputs(k)) EXPECT_LT(i, k);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    const Tensor x = random_tensor({6}, rng);
    const Tensor weights = random_tensor({6}, rng);
    const double err = check_gradient(
        [&](Var v) { return dot(softmax(v), constant_like(v, weights)); },
        x);
    EXPECT_LT(err, 1e-8);
}

// Property: random compositions of primitives have exact gradients.
TEST(Properties, RandomGraphsMatchFiniteDifferences) {
    std::mt19937_64 rng(42);
    for (unsigned seed = 0; seed < 40; ++seed) {
        std::vector<Tensor> inputs{random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)};
        const double err = check_gradients(
            [seed](Tape& t, std::span<const Var> in) { return random_graph(t, in, seed); }, inputs);
        EXPECT_LT(err, 1e-5) << "graph seed " << seed;
    }
}

// Property: grad(aF + bG) = a grad(F) + b grad(G).
TEST(Properties, BackwardIsLinear) {
    std::mt19937_64 rng(7);
    for (unsigned seed = 0; seed < 20; ++seed) {
        const Tensor x = random_tensor({3, 4}, rng);
        const Tensor w = random_tensor({4, 2}, rng);
        const double a = std::uniform_real_distribution<double>(-3, 3)(rng);
        const double b = std::uniform_real_distribution<double>(-3, 3)(rng);

        const auto grads = [&](auto&& build) {
            Tape t;
            const Var vx = t.variable(x), vw = t.variable(w);
            const Var in[] = {vx, vw};
            const Gradients g = t.backward(build(t, std::span<const Var>(in)));
            return std::pair{g[vx], g[vw]};
        };
        const auto f = [&](Tape& t, std::span<const Var> in) { return random_graph(t, in, seed); };
        const auto h = [&](Tape& t, std::span<const Var> in) { return random_graph(t, in, seed + 100); };
        const auto [fx, fw] = grads(f);
        const auto [hx, hw] = grads(h);
        const auto [cx, cw] = grads([&](Tape& t, std::span<const Var> in) {
            return add(scale(f(t, in), a), scale(h(t, in), b));
        });
        for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(cx[i], a * fx[i] + b * hx[i], 1e-10);
        for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(cw[i], a * fw[i] + b * hw[i], 1e-10);
    }
}

TEST(Properties, RepeatedEvaluationIsBitIdentical) {
    std::mt19937_64 rng(9);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor w = random_tensor({4, 2}, rng);
    const auto run = [&] {
        Tape t;
        const Var vx = t.variable(x), vw = t.variable(w);
        const Var in[] = {vx, vw};
        const Var root = random_graph(t, in, 11);
        const Gradients g = t.backward(root);
        return std::tuple{root.value(), g[vx], g[vw]};
    };
    EXPECT_EQ(run(), run());
}
