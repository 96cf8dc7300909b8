#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sadmil/error.hpp"

namespace sadmil {

struct BinaryMetrics {
    double acc = 0.0;
    double pre = 0.0;
    double rec = 0.0;
    double f1 = 0.0;

    friend bool operator==(const BinaryMetrics&, const BinaryMetrics&) = default;
};

/// Confusion-matrix metrics. Precision, recall and F1 are 0 when their
/// denominator is 0.
inline BinaryMetrics binary_metrics(std::span<const int> pred, std::span<const int> truth) {
    if (pred.size() != truth.size())
        throw DimensionError("metrics: " + std::to_string(pred.size()) + " predictions for " +
                             std::to_string(truth.size()) + " labels");
    if (pred.empty()) throw DataError("metrics: no samples");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1 && truth[i] == 1) ++tp;
        else if (pred[i] == 1) ++fp;
        else if (truth[i] == 1) ++fn;
        else ++tn;
    }
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    BinaryMetrics m;
    m.acc = ratio(tp + tn, pred.size());
    m.pre = ratio(tp, tp + fp);
    m.rec = ratio(tp, tp + fn);
    m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
    return m;
}

/// Area under the ROC curve as the Mann-Whitney statistic; tied scores count
/// one half.
inline double auc(std::span<const double> scores, std::span<const int> truth) {
    if (scores.size() != truth.size())
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(truth.size()) + " labels");
    const auto n_pos = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1));
    const std::size_t n_neg = truth.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks (1-based) over tie groups
    double pos_rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (truth[order[k]] == 1) pos_rank_sum += rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

/// AUC, or nothing when only one class is present.
inline std::optional<double> try_auc(std::span<const double> scores, std::span<const int> truth) {
    const auto n_pos = std::count(truth.begin(), truth.end(), 1);
    if (n_pos == 0 || static_cast<std::size_t>(n_pos) == truth.size()) return std::nullopt;
    return auc(scores, truth);
}

}  // namespace sadmil
