#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sadmil/tape.hpp"

namespace sadmil {

/// Neighborhood structure of one bag: adjacency A, degree D, Laplacian
/// L = D - A, and the signless form D + A used by the competition energy.
/// Immutable once built.
class BagGraph {
public:
    /// Validates that `adjacency` is square, symmetric, binary with a zero
    /// diagonal.
    static BagGraph from_adjacency(const Tensor& adjacency) {
        if (adjacency.rank() != 2 || adjacency.rows() != adjacency.cols())
            throw DimensionError("adjacency must be square, got " + shape_string(adjacency.shape()));
        const std::size_t n = adjacency.rows();
        for (std::size_t i = 0; i < n; ++i) {
            if (adjacency.at(i, i) != 0.0)
                throw DomainError("adjacency diagonal must be zero (row " + std::to_string(i) + ")");
            for (std::size_t j = 0; j < n; ++j) {
                const double a = adjacency.at(i, j);
                if (a != 0.0 && a != 1.0)
                    throw DomainError("adjacency entries must be 0 or 1 at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
                if (a != adjacency.at(j, i))
                    throw DomainError("adjacency must be symmetric at (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
            }
        }
        BagGraph g;
        g.n_ = n;
        g.adjacency_ = adjacency;
        g.degree_ = Tensor({n, n});
        g.laplacian_ = Tensor({n, n});
        g.signless_ = Tensor({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            double deg = 0.0;
            for (std::size_t j = 0; j < n; ++j) deg += adjacency.at(i, j);
            g.degree_.at(i, i) = deg;
            for (std::size_t j = 0; j < n; ++j) {
                const double d = i == j ? deg : 0.0;
                g.laplacian_.at(i, j) = d - adjacency.at(i, j);
                g.signless_.at(i, j) = d + adjacency.at(i, j);
            }
        }
        return g;
    }

    std::size_t size() const noexcept { return n_; }
    const Tensor& adjacency() const noexcept { return adjacency_; }
    const Tensor& degree() const noexcept { return degree_; }
    const Tensor& laplacian() const noexcept { return laplacian_; }
    const Tensor& signless_laplacian() const noexcept { return signless_; }

private:
    BagGraph() = default;

    std::size_t n_ = 0;
    Tensor adjacency_;
    Tensor degree_;
    Tensor laplacian_;
    Tensor signless_;
};

/// Path graph over instance order: i and j are related iff |i - j| == 1.
inline BagGraph chain_adjacency(std::size_t n) {
    if (n == 0) throw DimensionError("chain_adjacency: a bag needs at least one instance");
    Tensor a({n, n});
    for (std::size_t i = 0; i + 1 < n; ++i) {
        a.at(i, i + 1) = 1.0;
        a.at(i + 1, i) = 1.0;
    }
    return BagGraph::from_adjacency(a);
}

namespace detail {

inline void require_graph_size(const char* op, std::size_t len, const BagGraph& g) {
    if (len != g.size())
        throw DimensionError(std::string(op) + ": attention vector has " + std::to_string(len) +
                             " entries but the graph has " + std::to_string(g.size()) + " nodes");
}

inline Var column(Var f) { return reshape(f, {f.value().size(), 1}); }

inline Var graph_product(Var f, const Tensor& m) {
    return matmul(constant_like(f, m), column(f));
}

inline double quadratic_form(const Tensor& f, const Tensor& m) {
    const std::size_t n = f.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += m.at(i, j) * f[j];
        acc += f[i] * row;
    }
    return acc;
}

}  // namespace detail

// First-order smoothness energy f^T L f.
inline Var energy_s1(Var f, const BagGraph& g) {
    detail::require_graph_size("energy_s1", f.value().size(), g);
    return dot(detail::column(f), detail::graph_product(f, g.laplacian()));
}

// Second-order smoothness energy f^T L L f = |L f|^2.
inline Var energy_s2(Var f, const BagGraph& g) {
    detail::require_graph_size("energy_s2", f.value().size(), g);
    return sum(square(detail::graph_product(f, g.laplacian())));
}

// Sign-flipped first-order energy f^T (D + A) f; small when neighbors take
// opposite values.
inline Var energy_competition(Var f, const BagGraph& g) {
    detail::require_graph_size("energy_competition", f.value().size(), g);
    return dot(detail::column(f), detail::graph_product(f, g.signless_laplacian()));
}

inline double energy_s1(const Tensor& f, const BagGraph& g) {
    detail::require_graph_size("energy_s1", f.size(), g);
    return detail::quadratic_form(f, g.laplacian());
}

inline double energy_s2(const Tensor& f, const BagGraph& g) {
    detail::require_graph_size("energy_s2", f.size(), g);
    const std::size_t n = f.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += g.laplacian().at(i, j) * f[j];
        acc += row * row;
    }
    return acc;
}

inline double energy_competition(const Tensor& f, const BagGraph& g) {
    detail::require_graph_size("energy_competition", f.size(), g);
    return detail::quadratic_form(f, g.signless_laplacian());
}

/// Literal pairwise sums over the adjacency, prefactors included:
///   order 1: 1/2 sum_ij A_ij (f_i - f_j)^2        (equals f^T L f)
///   order 2: 1/4 sum_i (sum_j A_ij (f_i - f_j))^2  (equals |L f|^2 / 4)
/// Only used to cross-check the matrix forms.
inline double energy_sum_form(const Tensor& f, const BagGraph& g, int order) {
    detail::require_graph_size("energy_sum_form", f.size(), g);
    const std::size_t n = f.size();
    const Tensor& a = g.adjacency();
    double acc = 0.0;
    if (order == 1) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double d = f[i] - f[j];
                acc += a.at(i, j) * d * d;
            }
        return 0.5 * acc;
    }
    if (order == 2) {
        for (std::size_t i = 0; i < n; ++i) {
            double inner = 0.0;
            for (std::size_t j = 0; j < n; ++j) inner += a.at(i, j) * (f[i] - f[j]);
            acc += inner * inner;
        }
        return 0.25 * acc;
    }
    throw DomainError("energy_sum_form: order must be 1 or 2, got " + std::to_string(order));
}

}  // namespace sadmil
