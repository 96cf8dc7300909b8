#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sadmil/config.hpp"
#include "sadmil/model.hpp"
#include "sadmil/sweep.hpp"
#include "sadmil/training.hpp"

namespace sadmil {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Checkpoints
//   {"format": "sadmil-checkpoint", "version": 1, "seed": u64,
//    "model": {...}, "config": {...echo...},
//    "params": {"<name>": {"shape": [...], "data": [...]}, ...}}
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointFormat = "sadmil-checkpoint";

inline nlohmann::json checkpoint_to_json(const ModelParams& params, std::uint64_t seed,
                                         const nlohmann::json& config_echo = nlohmann::json::object()) {
    nlohmann::json tensors = nlohmann::json::object();
    const auto names = params.names();
    const auto ts = params.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) tensors[names[i]] = {{"shape", ts[i]->shape()}, {"data", ts[i]->data()}};
    return {{"format", kCheckpointFormat}, {"version", 1},         {"seed", seed},
            {"model", to_json(params.config)}, {"config", config_echo}, {"params", std::move(tensors)}};
}

inline ModelParams checkpoint_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("not a sadmil checkpoint");
        if (j.at("version").get<int>() != 1) throw DataError("unsupported checkpoint version");
        const auto& m = j.at("model");
        ModelParams p;
        p.config.input_dim = m.at("input_dim").get<std::size_t>();
        p.config.embed_dim = m.at("embed_dim").get<std::size_t>();
        p.config.attention_dim = m.at("attention_dim").get<std::size_t>();
        p.config.embed_depth = m.at("embed_depth").get<std::size_t>();
        p.config.pooling = pooling_from_string(m.at("pooling").get<std::string>());
        p.config.validate();
        p.embed.resize(p.config.embed_depth);

        const auto names = p.names();
        const auto slots = p.tensors();
        const auto& stored = j.at("params");
        if (stored.size() != names.size())
            throw DataError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model needs " +
                            std::to_string(names.size()));
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (!stored.contains(names[i])) throw DataError("checkpoint is missing parameter " + names[i]);
            const auto& t = stored.at(names[i]);
            *slots[i] = Tensor(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>());
        }
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    } catch (const DimensionError& e) {
        throw DataError(std::string("checkpoint does not match its model config: ") + e.what());
    }
}

inline std::uint64_t checkpoint_seed(const nlohmann::json& j) { return j.at("seed").get<std::uint64_t>(); }

inline nlohmann::json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os << text;
    if (!os) throw DataError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Reports. Wall-clock duration is kept out of the report body so repeated
// runs produce identical files; see timing_to_json.
// ---------------------------------------------------------------------------

inline nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const LevelMetrics& m) {
    return {{"acc", m.metrics.acc}, {"pre", m.metrics.pre}, {"rec", m.metrics.rec}, {"f1", m.metrics.f1},
            {"auc", optional_number(m.auc)}};
}

inline nlohmann::json to_json(const AttentionTrace& t) {
    nlohmann::json j{{"bag_id", t.bag_id},
                     {"bag_label", t.bag_label},
                     {"prob", t.prob},
                     {"bag_prediction", t.bag_prediction},
                     {"f", t.f.data()},
                     {"s", t.s.data()},
                     {"instance_prediction", t.instance_prediction}};
    if (t.instance_truth) j["instance_truth"] = *t.instance_truth;
    return j;
}

inline nlohmann::json to_json(const Evaluation& ev) {
    nlohmann::json traces = nlohmann::json::array();
    for (const auto& t : ev.traces) traces.push_back(to_json(t));
    return {{"scan", to_json(ev.scan)},
            {"slice", ev.slice ? to_json(*ev.slice) : nlohmann::json(nullptr)},
            {"mean_tv", ev.mean_tv},
            {"warnings", ev.warnings},
            {"attention_traces", std::move(traces)}};
}

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    return {{"mode", r.mode},
            {"alpha", r.alpha},
            {"sa_mode", to_string(r.sa_mode)},
            {"pooling", to_string(r.pooling)},
            {"seed", r.seed},
            {"initial_train_loss", r.initial_train_loss},
            {"final_train_loss", r.final_train_loss},
            {"best_epoch", r.best_epoch},
            {"stopping_epoch", r.stopping_epoch},
            {"epochs", std::move(epochs)},
            {"test", r.test ? to_json(*r.test) : nlohmann::json(nullptr)}};
}

inline nlohmann::json timing_to_json(const RunReport& r) { return {{"duration_seconds", r.duration_seconds}}; }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline constexpr const char* kMetricsHeader = "mode,alpha,repeat,level,acc,pre,rec,f1,auc";

struct MetricsRow {
    std::string mode;
    double alpha = 0.0;
    std::size_t repeat = 0;
    std::string level;  // "scan" or "slice"
    LevelMetrics metrics;
};

inline void write_metrics_row(std::ostream& os, const MetricsRow& row) {
    const auto& m = row.metrics.metrics;
    os << row.mode << ',' << format_double(row.alpha) << ',' << row.repeat << ',' << row.level << ','
       << format_double(m.acc) << ',' << format_double(m.pre) << ',' << format_double(m.rec) << ','
       << format_double(m.f1) << ',' << (row.metrics.auc ? format_double(*row.metrics.auc) : std::string()) << '\n';
}

/// Scan row always, slice row when the evaluation has one.
inline std::vector<MetricsRow> metrics_rows(const std::string& mode, double alpha, std::size_t repeat,
                                            const Evaluation& ev) {
    std::vector<MetricsRow> rows{{mode, alpha, repeat, "scan", ev.scan}};
    if (ev.slice) rows.push_back({mode, alpha, repeat, "slice", *ev.slice});
    return rows;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << kMetricsHeader << '\n';
    for (const auto& r : rows) write_metrics_row(os, r);
}

inline void write_sweep_csv(std::ostream& os, const SweepTable& table) {
    os << kMetricsHeader << '\n';
    for (const auto& run : table.runs) {
        if (!run.report.test) continue;
        for (const auto& row : metrics_rows(to_string(run.mode), run.alpha, run.repeat, *run.report.test))
            write_metrics_row(os, row);
    }
}

inline void write_sweep_summary_csv(std::ostream& os, const SweepTable& table) {
    static const char* cols[] = {"scan_acc",  "scan_pre",  "scan_rec",  "scan_f1",  "scan_auc",
                                 "slice_acc", "slice_pre", "slice_rec", "slice_f1", "slice_auc"};
    os << "mode,alpha,runs";
    for (const char* c : cols) os << ',' << c << "_mean," << c << "_sd";
    os << '\n';
    for (const auto& row : table.summary) {
        os << to_string(row.mode) << ',' << format_double(row.alpha) << ',' << row.runs;
        for (std::size_t c = 0; c < row.mean.size(); ++c) {
            const auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
            os << ',' << cell(row.mean[c]) << ',' << cell(row.sd[c]);
        }
        os << '\n';
    }
}

/// Attention trace of one bag: index,f,s,threshold,instance_truth.
inline void write_trace_csv(std::ostream& os, const AttentionTrace& t) {
    const bool truth = t.instance_truth.has_value();
    os << "index,f,s,threshold" << (truth ? ",instance_truth" : "") << '\n';
    const double threshold = 1.0 / static_cast<double>(t.s.size());
    for (std::size_t i = 0; i < t.s.size(); ++i) {
        os << i << ',' << format_double(t.f[i]) << ',' << format_double(t.s[i]) << ',' << format_double(threshold);
        if (truth) os << ',' << (*t.instance_truth)[i];
        os << '\n';
    }
}

}  // namespace sadmil
