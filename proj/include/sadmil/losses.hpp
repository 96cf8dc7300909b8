#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "sadmil/baggraph.hpp"
#include "sadmil/tape.hpp"

namespace sadmil {

enum class SaMode { none, s1, s2, competition };

inline std::string to_string(SaMode m) {
    switch (m) {
        case SaMode::none: return "none";
        case SaMode::s1: return "S1";
        case SaMode::s2: return "S2";
        case SaMode::competition: return "competition";
    }
    return "?";
}

inline SaMode sa_mode_from_string(const std::string& s) {
    if (s == "none") return SaMode::none;
    if (s == "S1" || s == "s1") return SaMode::s1;
    if (s == "S2" || s == "s2") return SaMode::s2;
    if (s == "competition") return SaMode::competition;
    throw ConfigError("unknown sa_mode '" + s + "' (expected none, S1, S2 or competition)");
}

enum class LossReduction { sum, mean };

struct LossConfig {
    double alpha = 0.5;
    SaMode sa_mode = SaMode::s1;
    LossReduction reduction = LossReduction::sum;

    void validate() const {
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw ConfigError("loss.alpha must lie in [0, 1], got " + std::to_string(alpha));
    }

    /// True when the smoothness term takes part in the objective at all.
    bool uses_sa() const { return alpha > 0.0 && sa_mode != SaMode::none; }
};

inline constexpr double kProbEpsilon = 1e-12;

/// Negated binary cross-entropy summed over bags, probabilities clamped to
/// [eps, 1 - eps].
inline Var cross_entropy(std::span<const Var> probs, std::span<const int> labels) {
    if (probs.size() != labels.size())
        throw DimensionError("cross_entropy: " + std::to_string(probs.size()) + " probabilities for " +
                             std::to_string(labels.size()) + " labels");
    if (probs.empty()) throw DimensionError("cross_entropy: no bags");
    Var total;
    for (std::size_t b = 0; b < probs.size(); ++b) {
        Var p = clamp(probs[b], kProbEpsilon, 1.0 - kProbEpsilon);
        Var ll = labels[b] == 1 ? log(p) : log(sub(constant_like(p, Tensor::scalar(1.0)), p));
        Var term = scale(reshape(ll, {1}), -1.0);
        total = b == 0 ? term : add(total, term);
    }
    return total;
}

inline double cross_entropy(std::span<const double> probs, std::span<const int> labels) {
    if (probs.size() != labels.size())
        throw DimensionError("cross_entropy: " + std::to_string(probs.size()) + " probabilities for " +
                             std::to_string(labels.size()) + " labels");
    double total = 0.0;
    for (std::size_t b = 0; b < probs.size(); ++b) {
        const double p = std::clamp(probs[b], kProbEpsilon, 1.0 - kProbEpsilon);
        total -= labels[b] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return total;
}

inline Var sa_energy(Var f, const BagGraph& g, SaMode mode) {
    switch (mode) {
        case SaMode::s1: return energy_s1(f, g);
        case SaMode::s2: return energy_s2(f, g);
        case SaMode::competition: return energy_competition(f, g);
        default: throw ConfigError("sa_loss: mode 'none' has no energy");
    }
}

/// Sum over bags of the selected smoothness energy of each bag's attention
/// values.
inline Var sa_loss(std::span<const Var> fs, std::span<const BagGraph* const> graphs, SaMode mode) {
    if (fs.size() != graphs.size())
        throw DimensionError("sa_loss: " + std::to_string(fs.size()) + " attention vectors for " +
                             std::to_string(graphs.size()) + " graphs");
    if (fs.empty()) throw DimensionError("sa_loss: no bags");
    Var total;
    for (std::size_t b = 0; b < fs.size(); ++b) {
        Var e = sa_energy(fs[b], *graphs[b], mode);
        total = b == 0 ? e : add(total, e);
    }
    return total;
}

inline void validate_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw DomainError("total_loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
}

/// (1 - alpha) * ce + alpha * sa. The endpoints return the selected term
/// unchanged.
inline Var total_loss(Var ce, Var sa, double alpha) {
    validate_alpha(alpha);
    if (alpha == 0.0) return ce;
    if (alpha == 1.0) return sa;
    return add(scale(ce, 1.0 - alpha), scale(sa, alpha));
}

inline double total_loss(double ce, double sa, double alpha) {
    validate_alpha(alpha);
    if (alpha == 0.0) return ce;
    if (alpha == 1.0) return sa;
    return (1.0 - alpha) * ce + alpha * sa;
}

}  // namespace sadmil
