#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sadmil/tape.hpp"

namespace sadmil {

/// Builds a scalar on `tape` from the leaves bound to `inputs`.
using MultiFn = std::function<Var(Tape&, std::span<const Var>)>;

namespace detail {

inline double evaluate_scalar(const MultiFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.variable(t));
    const double y = fn(tape, leaves).value().item();
    if (!std::isfinite(y)) throw NumericError("gradient check: non-finite function value");
    return y;
}

}  // namespace detail

/// Compares reverse-mode gradients of `fn` against central differences for
/// every coordinate of every input. Returns the largest
/// |analytic - numeric| / max(1, |analytic|).
inline double check_gradients(const MultiFn& fn, std::vector<Tensor> inputs, double step = 1e-6) {
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> leaves;
        for (const auto& t : inputs) leaves.push_back(tape.variable(t));
        const Var root = fn(tape, leaves);
        if (!std::isfinite(root.value().item())) throw NumericError("gradient check: non-finite function value");
        const Gradients g = tape.backward(root);
        for (const auto& leaf : leaves) analytic.push_back(g[leaf]);
    }

    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + step;
            const double up = detail::evaluate_scalar(fn, inputs);
            inputs[k][i] = saved - step;
            const double down = detail::evaluate_scalar(fn, inputs);
            inputs[k][i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[k][i];
            worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
        }
    }
    return worst;
}

inline double check_gradient(const std::function<Var(Var)>& fn, const Tensor& x, double step = 1e-6) {
    return check_gradients([&fn](Tape&, std::span<const Var> v) { return fn(v[0]); }, {x}, step);
}

}  // namespace sadmil
