#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <algorithm>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sadmil/baggraph.hpp"
#include "sadmil/dataio.hpp"
#include "sadmil/losses.hpp"
#include "sadmil/metrics.hpp"
#include "sadmil/model.hpp"

namespace sadmil {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 4;
    std::size_t max_epochs = 200;
    std::size_t patience = 8;
    double threshold = 0.5;  // bag decision threshold
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
        if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
        if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
        if (patience == 0) throw ConfigError("train.patience must be >= 1");
        if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("train.threshold must lie in (0, 1)");
    }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m, v;
    std::uint64_t t = 0;  // steps taken so far
};

/// One bias-corrected Adam update. Moments are allocated on the first call.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state, double lr,
                      const AdamOptions& opt = {}) {
    if (params.size() != grads.size())
        throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                             std::to_string(grads.size()) + " gradients");
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.push_back(Tensor::zeros(p->shape()));
            state.v.push_back(Tensor::zeros(p->shape()));
        }
    }
    if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
    for (std::size_t k = 0; k < params.size(); ++k)
        if (params[k]->shape() != grads[k].shape() || state.m[k].shape() != grads[k].shape())
            throw DimensionError("adam_step: parameter " + std::to_string(k) + " has shape " +
                                 shape_string(params[k]->shape()) + ", gradient " + shape_string(grads[k].shape()));

    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        const Tensor& g = grads[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Loss assembly
// ---------------------------------------------------------------------------

/// Chain graphs depend only on the bag length, so they are built once per
/// length.
class GraphCache {
public:
    const BagGraph& chain(std::size_t n) {
        auto it = graphs_.find(n);
        if (it == graphs_.end()) it = graphs_.emplace(n, std::make_unique<BagGraph>(chain_adjacency(n))).first;
        return *it->second;
    }

private:
    std::map<std::size_t, std::unique_ptr<BagGraph>> graphs_;
};

/// Objective over a batch of bags, recorded on `tape`. The smoothness branch
/// is not evaluated at all unless alpha > 0 and a mode is selected.
inline Var batch_loss(Tape& tape, std::span<const Bag* const> bags, const ModelParams& params, const ParamVars& pv,
                      const LossConfig& loss, GraphCache& graphs) {
    std::vector<Var> probs, fs;
    std::vector<int> labels;
    std::vector<const BagGraph*> gs;
    const bool with_sa = loss.uses_sa();
    for (const Bag* bag : bags) {
        const ForwardVars fv = forward(tape, *bag, params, pv);
        probs.push_back(fv.prob);
        labels.push_back(bag->label);
        if (with_sa) {
            if (!fv.has_attention) throw ConfigError("the smoothness loss needs attention pooling");
            fs.push_back(fv.f);
            gs.push_back(&graphs.chain(bag->size()));
        }
    }
    const Var ce = cross_entropy(probs, labels);
    Var out = with_sa ? total_loss(ce, sa_loss(fs, gs, loss.sa_mode), loss.alpha) : ce;
    if (loss.reduction == LossReduction::mean) out = scale(out, 1.0 / static_cast<double>(bags.size()));
    return out;
}

/// Average per-bag objective over a dataset.
inline double mean_loss(const std::vector<Bag>& bags, const ModelParams& params, const LossConfig& loss,
                        GraphCache& graphs) {
    if (bags.empty()) throw DataError("mean_loss: empty dataset");
    LossConfig per_bag = loss;
    per_bag.reduction = LossReduction::sum;
    double total = 0.0;
    for (const Bag& bag : bags) {
        Tape tape;
        const ParamVars pv = bind(tape, params);
        const Bag* one[] = {&bag};
        total += batch_loss(tape, one, params, pv, per_bag, graphs).value().item();
    }
    return total / static_cast<double>(bags.size());
}

// ---------------------------------------------------------------------------
// Prediction rules
// ---------------------------------------------------------------------------

inline int predict_bag(double prob, double threshold = 0.5) { return prob >= threshold ? 1 : 0; }

inline int predict_bag(const BagForward& fw, double threshold = 0.5) { return predict_bag(fw.prob, threshold); }

/// Negative bag: every instance negative. Positive bag: instance i is
/// positive iff s_i > 1 / N (strictly).
inline std::vector<int> predict_instances(const BagForward& fw, int bag_prediction) {
    if (!fw.has_attention())
        throw ConfigError("instance prediction is undefined for max/mean pooling (no attention weights)");
    const std::size_t n = fw.s.size();
    std::vector<int> out(n, 0);
    if (bag_prediction == 0) return out;
    const double threshold = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = fw.s[i] > threshold ? 1 : 0;
    return out;
}

/// Total variation sum_i |f_{i+1} - f_i| of an attention-value trace.
inline double total_variation(const Tensor& f) {
    double tv = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) tv += std::abs(f[i] - f[i - 1]);
    return tv;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct LevelMetrics {
    BinaryMetrics metrics;
    std::optional<double> auc;  // absent when one class is missing
};

struct AttentionTrace {
    std::string bag_id;
    int bag_label = 0;
    double prob = 0.0;
    int bag_prediction = 0;
    Tensor f, s;
    std::vector<int> instance_prediction;
    std::optional<std::vector<int>> instance_truth;
};

struct Evaluation {
    LevelMetrics scan;
    std::optional<LevelMetrics> slice;  // attention pooling with instance labels only
    std::vector<AttentionTrace> traces;
    std::vector<double> probs;
    double mean_tv = 0.0;
    std::vector<std::string> warnings;
};

/// Runs the model over `bags` and scores both levels. Slice-level scores rank
/// instances by N * s_i inside predicted-positive bags and 0 elsewhere, the
/// quantity the instance rule thresholds at 1.
inline Evaluation evaluate(const std::vector<Bag>& bags, const ModelParams& params, double threshold = 0.5) {
    if (bags.empty()) throw DataError("evaluate: empty dataset");
    Evaluation ev;
    std::vector<int> bag_pred, bag_truth;
    std::vector<int> inst_pred, inst_truth;
    std::vector<double> inst_score;
    bool all_labelled = true;
    const bool attention = params.config.pooling == Pooling::attention;
    double tv_sum = 0.0;

    for (const Bag& bag : bags) {
        const BagForward fw = forward(bag, params);
        if (!std::isfinite(fw.prob)) throw NumericError("bag '" + bag.id + "': non-finite probability");
        const int pred = predict_bag(fw, threshold);
        ev.probs.push_back(fw.prob);
        bag_pred.push_back(pred);
        bag_truth.push_back(bag.label);

        AttentionTrace tr;
        tr.bag_id = bag.id;
        tr.bag_label = bag.label;
        tr.prob = fw.prob;
        tr.bag_prediction = pred;
        tr.instance_truth = bag.instance_labels;
        if (attention) {
            tr.f = fw.f;
            tr.s = fw.s;
            tr.instance_prediction = predict_instances(fw, pred);
            tv_sum += total_variation(fw.f);
            if (bag.instance_labels) {
                const double n = static_cast<double>(bag.size());
                for (std::size_t i = 0; i < bag.size(); ++i) {
                    inst_pred.push_back(tr.instance_prediction[i]);
                    inst_truth.push_back((*bag.instance_labels)[i]);
                    inst_score.push_back(pred ? n * fw.s[i] : 0.0);
                }
            }
        }
        if (!bag.instance_labels) all_labelled = false;
        ev.traces.push_back(std::move(tr));
    }

    ev.scan.metrics = binary_metrics(bag_pred, bag_truth);
    ev.scan.auc = try_auc(ev.probs, bag_truth);
    if (!ev.scan.auc) ev.warnings.push_back("scan-level AUC undefined: only one bag class present");

    if (attention) {
        ev.mean_tv = tv_sum / static_cast<double>(bags.size());
        if (!all_labelled) {
            ev.warnings.push_back("instance labels missing; slice-level metrics omitted");
        } else {
            LevelMetrics slice;
            slice.metrics = binary_metrics(inst_pred, inst_truth);
            slice.auc = try_auc(inst_score, inst_truth);
            if (!slice.auc) ev.warnings.push_back("slice-level AUC undefined: only one instance class present");
            ev.slice = slice;
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;  // mean per bag, accumulated over the epoch's updates
    double val_loss = 0.0;    // mean per bag after the epoch
};

/// Human-readable name of the configured model variant.
inline std::string mode_tag(const ModelConfig& model, const LossConfig& loss) {
    if (model.pooling == Pooling::max) return "MIL + Max agg.";
    if (model.pooling == Pooling::mean) return "MIL + Mean agg.";
    if (!loss.uses_sa()) return "Att-MIL baseline";
    return "SA-DMIL-" + to_string(loss.sa_mode);
}

struct RunReport {
    std::string mode;
    double alpha = 0.0;
    SaMode sa_mode = SaMode::none;
    Pooling pooling = Pooling::attention;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    double initial_train_loss = 0.0;
    double final_train_loss = 0.0;
    std::size_t best_epoch = 0;      // 0 means the initial parameters were best
    std::size_t stopping_epoch = 0;
    std::optional<Evaluation> test;  // present when a test split was given
    double duration_seconds = 0.0;
};

struct TrainResult {
    ModelParams params;
    RunReport report;
};

/// Adam over seeded bag batches with early stopping on validation loss.
/// Returns the parameters of the epoch with the lowest validation loss.
inline TrainResult train(const DatasetSplits& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                         const LossConfig& loss) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    model_cfg.validate();
    loss.validate();
    if (data.train.empty()) throw DataError("train: empty training split");
    if (data.val.empty()) throw DataError("train: empty validation split");
    if (loss.uses_sa() && model_cfg.pooling != Pooling::attention)
        throw ConfigError("the smoothness loss needs attention pooling");

    ModelParams params = init_params(model_cfg, cfg.seed);
    ModelParams best = params;
    AdamState adam;
    GraphCache graphs;
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    RunReport report;
    report.mode = mode_tag(model_cfg, loss);
    report.alpha = loss.alpha;
    report.sa_mode = loss.sa_mode;
    report.pooling = model_cfg.pooling;
    report.seed = cfg.seed;
    report.initial_train_loss = mean_loss(data.train, params, loss, graphs);

    double best_val = mean_loss(data.val, params, loss, graphs);
    std::size_t since_best = 0;
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t first = 0, batch = 0; first < order.size(); first += cfg.batch_size, ++batch) {
            const std::size_t last = std::min(order.size(), first + cfg.batch_size);
            std::vector<const Bag*> bags;
            for (std::size_t k = first; k < last; ++k) bags.push_back(&data.train[order[k]]);

            Tape tape;
            const ParamVars pv = bind(tape, params);
            const Var root = batch_loss(tape, bags, params, pv, loss, graphs);
            const double value = root.value().item();
            if (!std::isfinite(value))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch));
            epoch_loss += loss.reduction == LossReduction::mean ? value * static_cast<double>(bags.size()) : value;

            const Gradients g = tape.backward(root);
            std::vector<Tensor> grads;
            for (Var v : pv.all()) grads.push_back(g[v]);
            adam_step(params.tensors(), grads, adam, cfg.learning_rate);
        }

        const double val = mean_loss(data.val, params, loss, graphs);
        if (!std::isfinite(val)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        report.epochs.push_back({epoch, epoch_loss / static_cast<double>(order.size()), val});
        report.stopping_epoch = epoch;
        if (val < best_val) {
            best_val = val;
            best = params;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    report.final_train_loss = mean_loss(data.train, best, loss, graphs);
    if (!data.test.empty()) report.test = evaluate(data.test, best, cfg.threshold);
    report.duration_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {std::move(best), std::move(report)};
}

}  // namespace sadmil
