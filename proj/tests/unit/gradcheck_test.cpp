#include <gtest/gtest.h>

#include <cmath>

#include "sadmil/gradcheck.hpp"

using namespace sadmil;

TEST(CheckGradient, QuadraticIsExactUpToRoundoff) {
    const double err = check_gradient([](Var x) { return sum(square(x)); }, Tensor::vector({1, 2}));
    EXPECT_LT(err, 1e-8);
}

TEST(CheckGradient, TanhSum) {
    const double err = check_gradient([](Var x) { return sum(tanh(x)); }, Tensor::vector({0.3}));
    EXPECT_LT(err, 1e-6);
}

TEST(CheckGradient, ConstantFunctionHasZeroError) {
    const double err = check_gradient([](Var x) { return constant_like(x, Tensor::scalar(2.5)); },
                                      Tensor::vector({0.1, -0.4, 2.0}));
    EXPECT_EQ(err, 0.0);
}

TEST(CheckGradient, DetectsAWrongGradient) {
    // Forward computes x^3 but the recorded rule claims 2x.
    const auto broken = [](Var x) {
        Tensor v = x.value();
        for (auto& e : v.values()) e = e * e * e;
        const auto xi = x.id();
        Var y = detail::mut(*x.tape()).record(std::move(v), {xi},
                                               [xi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                                                   Tensor gi = t.value(xi);
                                                   for (std::size_t i = 0; i < gi.size(); ++i) gi[i] = 2 * gi[i] * g[i];
                                                   detail::accumulate(t, grads, xi, gi);
                                               });
        return sum(y);
    };
    EXPECT_GT(check_gradient(broken, Tensor::vector({1.5, -0.7})), 0.1);
}

TEST(CheckGradient, NonFiniteEvaluationThrows) {
    EXPECT_THROW(check_gradient([](Var x) { return sum(exp(scale(x, 1000.0))); }, Tensor::vector({1.0})),
                 NumericError);
}

TEST(CheckGradient, MultipleInputs) {
    const double err = check_gradients(
        [](Tape&, std::span<const Var> in) { return sum(tanh(matmul(in[0], in[1]))); },
        {Tensor::matrix({{0.1, -0.2}, {0.4, 0.3}}), Tensor::matrix({{1.0}, {-0.5}})});
    EXPECT_LT(err, 1e-8);
}
