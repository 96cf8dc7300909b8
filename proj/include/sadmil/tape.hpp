#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sadmil/error.hpp"
#include "sadmil/tensor.hpp"

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every primitive evaluated during one forward pass, in
// evaluation order, so the list is topologically sorted by construction.
// Values are computed eagerly; backward() walks the list in reverse and
// applies each entry's local rule. Tapes are built fresh per forward pass,
// which is what lets bags of different lengths share one code path.

namespace sadmil {

class Tape;

/// Handle to a tensor recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
class Var {
public:
    Var() = default;
    Var(const Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    std::size_t id() const noexcept { return id_; }
    const Tape* tape() const noexcept { return tape_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }

private:
    const Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Gradients of a scalar root with respect to every variable leaf of a tape.
class Gradients {
public:
    Gradients() = default;
    Gradients(const Tape* tape, std::vector<Tensor> grads) : tape_(tape), grads_(std::move(grads)) {}

    /// Gradient for a leaf; zeros if the root does not depend on it.
    Tensor operator[](Var v) const;

private:
    const Tape* tape_ = nullptr;
    std::vector<Tensor> grads_;
};

class Tape {
public:
    /// Local backward rule: receives the tape, the gradient flowing into the
    /// entry's output and the gradient buffers of all entries.
    using BackwardFn = std::function<void(const Tape&, const Tensor&, std::vector<Tensor>&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable leaf.
    Var variable(Tensor value) { return push(std::move(value), {}, nullptr, Kind::variable, true); }

    /// Non-differentiable leaf.
    Var constant(Tensor value) { return push(std::move(value), {}, nullptr, Kind::constant, false); }

    /// Record the output of a primitive computed from `inputs`.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
        for (auto in : inputs)
            if (in >= entries_.size()) throw Error("tape entry refers to a later entry");
        const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                       [&](std::size_t in) { return entries_[in].requires_grad; });
        return push(std::move(value), std::move(inputs), std::move(backward), Kind::op, needs);
    }

    const Tensor& value(std::size_t id) const { return entries_.at(id).value; }
    bool requires_grad(std::size_t id) const { return entries_.at(id).requires_grad; }
    bool is_variable(std::size_t id) const { return entries_.at(id).kind == Kind::variable; }
    const std::vector<std::size_t>& inputs(std::size_t id) const { return entries_.at(id).inputs; }
    std::size_t size() const noexcept { return entries_.size(); }

    bool owns(Var v) const noexcept { return v.tape() == this && v.id() < entries_.size(); }

    Gradients backward(Var root) const {
        if (!owns(root)) throw Error("backward root is not recorded on this tape");
        const Tensor& r = value(root.id());
        if (!r.is_scalar()) throw DimensionError("backward root must be scalar, got shape " + shape_string(r.shape()));

        std::vector<Tensor> grads(entries_.size());
        grads[root.id()] = Tensor::filled(r.shape(), 1.0);
        for (std::size_t k = root.id() + 1; k-- > 0;) {
            const Entry& e = entries_[k];
            if (e.kind != Kind::op || !e.requires_grad || grads[k].empty()) continue;
            e.backward(*this, grads[k], grads);
        }
        return Gradients(this, std::move(grads));
    }

private:
    enum class Kind { variable, constant, op };

    struct Entry {
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Kind kind;
        bool requires_grad;
    };

    Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, Kind kind, bool requires_grad) {
        entries_.push_back(Entry{std::move(value), std::move(inputs), std::move(backward), kind, requires_grad});
        return Var(this, entries_.size() - 1);
    }

    std::deque<Entry> entries_;  // deque: references from value() survive later records
};

inline const Tensor& Var::value() const {
    if (!tape_) throw Error("unbound Var");
    return tape_->value(id_);
}

inline Tensor Gradients::operator[](Var v) const {
    if (!tape_ || v.tape() != tape_) throw Error("variable does not belong to the differentiated tape");
    if (!tape_->is_variable(v.id())) throw Error("gradients are only reported for variable leaves");
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
    return Tensor::zeros(v.value().shape());
}

namespace detail {

inline void accumulate(const Tape& tape, std::vector<Tensor>& grads, std::size_t id, const Tensor& g) {
    if (!tape.requires_grad(id)) return;
    Tensor& slot = grads[id];
    if (slot.empty()) {
        slot = g;
        return;
    }
    auto dst = slot.values();
    auto src = g.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

inline const Tape& same_tape(Var a, Var b) {
    if (!a.tape() || a.tape() != b.tape()) throw Error("operands recorded on different tapes");
    return *a.tape();
}

inline Tape& mut(const Tape& t) { return const_cast<Tape&>(t); }

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
}

// C = A * B for row-major A (m x k), B (k x n).
inline Tensor gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
    const std::size_t m = ta ? a.cols() : a.rows();
    const std::size_t k = ta ? a.rows() : a.cols();
    const std::size_t n = tb ? b.rows() : b.cols();
    Tensor c({m, n});
    const std::size_t ac = a.cols();
    const std::size_t bc = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ta ? a[p * ac + i] : a[i * ac + p];
            if (av == 0.0) continue;
            double* crow = &c[i * n];
            if (tb) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * bc + p];
            } else {
                const double* brow = b.data().data() + p * bc;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    return c;
}

template <class Fwd, class Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv) {
    const Tape& tape = *x.tape();
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
    const auto xi = x.id();
    return mut(tape).record(std::move(out), {xi}, [xi, deriv](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& in = t.value(xi);
        Tensor gi(in.shape());
        for (std::size_t i = 0; i < in.size(); ++i) gi[i] = g[i] * deriv(in[i]);
        accumulate(t, grads, xi, gi);
    });
}

inline double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct AxisSplit {
    std::size_t outer, len, inner;
};

inline AxisSplit split_axis(const Tensor& t, std::size_t axis, const char* op) {
    if (axis >= t.rank())
        throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                             shape_string(t.shape()));
    AxisSplit s{1, t.shape()[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= t.shape()[i];
    for (std::size_t i = axis + 1; i < t.rank(); ++i) s.inner *= t.shape()[i];
    if (s.len == 0) throw DimensionError(std::string(op) + ": empty axis");
    return s;
}

}  // namespace detail

/// Records `value` as a constant on the tape that holds `anchor`.
inline Var constant_like(Var anchor, Tensor value) {
    if (!anchor.tape()) throw Error("unbound Var");
    return detail::mut(*anchor.tape()).constant(std::move(value));
}

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    const Tape& tape = detail::same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows())
        throw DimensionError("matmul: incompatible shapes " + shape_string(av.shape()) + " and " +
                             shape_string(bv.shape()));
    const auto ai = a.id(), bi = b.id();
    return detail::mut(tape).record(detail::gemm(av, false, bv, false), {ai, bi},
                                    [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
                                        if (t.requires_grad(ai))
                                            detail::accumulate(t, grads, ai, detail::gemm(g, false, t.value(bi), true));
                                        if (t.requires_grad(bi))
                                            detail::accumulate(t, grads, bi, detail::gemm(t.value(ai), true, g, false));
                                    });
}

inline Var add(Var a, Var b) {
    const Tape& tape = detail::same_tape(a, b);
    detail::require_same_shape("add", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    const auto ai = a.id(), bi = b.id();
    return detail::mut(tape).record(std::move(out), {ai, bi}, [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        detail::accumulate(t, grads, ai, g);
        detail::accumulate(t, grads, bi, g);
    });
}

inline Var sub(Var a, Var b) {
    const Tape& tape = detail::same_tape(a, b);
    detail::require_same_shape("sub", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    const auto ai = a.id(), bi = b.id();
    return detail::mut(tape).record(std::move(out), {ai, bi}, [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        detail::accumulate(t, grads, ai, g);
        Tensor neg = g;
        for (auto& v : neg.values()) v = -v;
        detail::accumulate(t, grads, bi, neg);
    });
}

inline Var mul(Var a, Var b) {
    const Tape& tape = detail::same_tape(a, b);
    detail::require_same_shape("mul", a.value(), b.value());
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    const auto ai = a.id(), bi = b.id();
    return detail::mut(tape).record(std::move(out), {ai, bi}, [ai, bi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        if (t.requires_grad(ai)) {
            Tensor ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
            detail::accumulate(t, grads, ai, ga);
        }
        if (t.requires_grad(bi)) {
            Tensor gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
            detail::accumulate(t, grads, bi, gb);
        }
    });
}

/// Multiply by a constant.
inline Var scale(Var x, double factor) {
    return detail::unary(x, [factor](double v) { return factor * v; }, [factor](double) { return factor; });
}

inline Var tanh(Var x) {
    return detail::unary(x, [](double v) { return std::tanh(v); },
                         [](double v) {
                             const double y = std::tanh(v);
                             return 1.0 - y * y;
                         });
}

inline Var sigmoid(Var x) {
    return detail::unary(x, detail::stable_sigmoid, [](double v) {
        const double y = detail::stable_sigmoid(v);
        return y * (1.0 - y);
    });
}

inline Var exp(Var x) {
    return detail::unary(x, [](double v) { return std::exp(v); }, [](double v) { return std::exp(v); });
}

inline Var log(Var x) {
    const Tensor& xv = x.value();
    for (std::size_t i = 0; i < xv.size(); ++i)
        if (!(xv[i] > 0.0))
            throw DomainError("log: non-positive input " + std::to_string(xv[i]) + " at index " + std::to_string(i));
    return detail::unary(x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

inline Var square(Var x) {
    return detail::unary(x, [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

/// Clamp into [lo, hi]; the gradient is zero where the input was clipped.
inline Var clamp(Var x, double lo, double hi) {
    return detail::unary(x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
                         [lo, hi](double v) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

/// Adds `row` (shape [n]) to every row of `m` (shape [k x n]).
inline Var add_row(Var m, Var row) {
    const Tape& tape = detail::same_tape(m, row);
    const Tensor& mv = m.value();
    const Tensor& rv = row.value();
    if (mv.rank() != 2 || rv.size() != mv.cols())
        throw DimensionError("add_row: cannot broadcast " + shape_string(rv.shape()) + " over rows of " +
                             shape_string(mv.shape()));
    Tensor out = mv;
    const std::size_t n = mv.cols();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += rv[i % n];
    const auto mi = m.id(), ri = row.id();
    return detail::mut(tape).record(std::move(out), {mi, ri}, [mi, ri, n](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        detail::accumulate(t, grads, mi, g);
        if (t.requires_grad(ri)) {
            Tensor gr(t.value(ri).shape());
            for (std::size_t i = 0; i < g.size(); ++i) gr[i % n] += g[i];
            detail::accumulate(t, grads, ri, gr);
        }
    });
}

inline Var transpose(Var x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_string(xv.shape()));
    const std::size_t r = xv.rows(), c = xv.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    const auto xi = x.id();
    return detail::mut(*x.tape()).record(std::move(out), {xi}, [xi, r, c](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        Tensor gi({r, c});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gi[i * c + j] = g[j * r + i];
        detail::accumulate(t, grads, xi, gi);
    });
}

inline Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    const auto xi = x.id();
    return detail::mut(*x.tape()).record(std::move(out), {xi}, [xi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        detail::accumulate(t, grads, xi, g.reshaped(t.value(xi).shape()));
    });
}

enum class Reduction { sum, max, mean };

/// Reduce along `axis`, keeping it with length 1.
inline Var reduce(Reduction op, Var x, std::size_t axis) {
    const Tensor& xv = x.value();
    const auto s = detail::split_axis(xv, axis, "reduce");
    Shape out_shape = xv.shape();
    out_shape[axis] = 1;
    Tensor out(out_shape);
    // argmax per output slot, first maximal index on ties
    std::vector<std::size_t> arg(op == Reduction::max ? out.size() : 0);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            const std::size_t slot = o * s.inner + in;
            const std::size_t base = o * s.len * s.inner + in;
            if (op == Reduction::max) {
                std::size_t best = 0;
                for (std::size_t k = 1; k < s.len; ++k)
                    if (xv[base + k * s.inner] > xv[base + best * s.inner]) best = k;
                arg[slot] = best;
                out[slot] = xv[base + best * s.inner];
            } else {
                double acc = 0.0;
                for (std::size_t k = 0; k < s.len; ++k) acc += xv[base + k * s.inner];
                out[slot] = op == Reduction::mean ? acc / static_cast<double>(s.len) : acc;
            }
        }
    }
    const auto xi = x.id();
    return detail::mut(*x.tape()).record(
        std::move(out), {xi}, [xi, s, op, arg = std::move(arg)](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
            Tensor gi(t.value(xi).shape());
            const double w = op == Reduction::mean ? 1.0 / static_cast<double>(s.len) : 1.0;
            for (std::size_t o = 0; o < s.outer; ++o) {
                for (std::size_t in = 0; in < s.inner; ++in) {
                    const std::size_t slot = o * s.inner + in;
                    const std::size_t base = o * s.len * s.inner + in;
                    if (op == Reduction::max) {
                        gi[base + arg[slot] * s.inner] += g[slot];
                    } else {
                        for (std::size_t k = 0; k < s.len; ++k) gi[base + k * s.inner] += w * g[slot];
                    }
                }
            }
            detail::accumulate(t, grads, xi, gi);
        });
}

inline Var sum(Var x, std::size_t axis) { return reduce(Reduction::sum, x, axis); }
inline Var max(Var x, std::size_t axis) { return reduce(Reduction::max, x, axis); }
inline Var mean(Var x, std::size_t axis) { return reduce(Reduction::mean, x, axis); }

/// Sum of every entry, as a scalar.
inline Var sum(Var x) {
    if (x.value().rank() == 1) return sum(x, 0);
    return sum(reshape(x, {x.value().size()}), 0);
}

inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

/// Softmax over all entries of a vector, evaluated with max-subtraction.
inline Var softmax(Var x) {
    const Tensor& xv = x.value();
    if (xv.empty()) throw DimensionError("softmax: empty input");
    double hi = xv[0];
    for (double v : xv.values()) hi = std::max(hi, v);
    Tensor out(xv.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        out[i] = std::exp(xv[i] - hi);
        z += out[i];
    }
    for (auto& v : out.values()) v /= z;
    const auto xi = x.id();
    const auto oi = x.tape()->size();  // id the output will receive
    return detail::mut(*x.tape()).record(std::move(out), {xi}, [xi, oi](const Tape& t, const Tensor& g, std::vector<Tensor>& grads) {
        const Tensor& s = t.value(oi);
        double gs = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) gs += g[i] * s[i];
        Tensor gi(s.shape());
        for (std::size_t i = 0; i < s.size(); ++i) gi[i] = s[i] * (g[i] - gs);
        detail::accumulate(t, grads, xi, gi);
    });
}

enum class Elementwise { add, sub, mul, tanh, sigmoid, exp, log, square };

inline Var elementwise(Elementwise op, Var x) {
    switch (op) {
        case Elementwise::tanh: return tanh(x);
        case Elementwise::sigmoid: return sigmoid(x);
        case Elementwise::exp: return exp(x);
        case Elementwise::log: return log(x);
        case Elementwise::square: return square(x);
        default: throw Error("elementwise: binary op given a single operand");
    }
}

inline Var elementwise(Elementwise op, Var a, Var b) {
    switch (op) {
        case Elementwise::add: return add(a, b);
        case Elementwise::sub: return sub(a, b);
        case Elementwise::mul: return mul(a, b);
        default: throw Error("elementwise: unary op given two operands");
    }
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double c, Var x) { return scale(x, c); }

}  // namespace sadmil
