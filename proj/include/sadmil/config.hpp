#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sadmil/dataio.hpp"
#include "sadmil/losses.hpp"
#include "sadmil/model.hpp"
#include "sadmil/sweep.hpp"
#include "sadmil/training.hpp"

// Experiment configuration. Files are JSON objects laid out like
// to_json(ExperimentConfig{}); every key is optional, unknown keys are
// rejected, and `section.key=value` overrides are applied on top.

namespace sadmil {

struct SplitConfig {
    std::array<double, 3> fractions{0.7, 0.15, 0.15};
    std::uint64_t seed = 11;

    void validate() const {
        double total = 0.0;
        for (double f : fractions) {
            if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split.fractions entries must lie in [0, 1]");
            total += f;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split.fractions must sum to 1");
    }
};

struct ExperimentConfig {
    SynthConfig data;
    ModelConfig model;
    TrainConfig train;
    LossConfig loss;
    SplitConfig split;
    SweepSpec sweep;

    void validate() const {
        data.validate();
        model.validate();
        train.validate();
        loss.validate();
        split.validate();
        sweep.validate();
        if (loss.uses_sa() && model.pooling != Pooling::attention)
            throw ConfigError("loss.sa_mode requires model.pooling = attention");
    }
};

inline std::string to_string(LossReduction r) { return r == LossReduction::sum ? "sum" : "mean"; }

inline std::string to_string(PositiveLayout l) { return l == PositiveLayout::contiguous ? "contiguous" : "scattered"; }

inline nlohmann::json to_json(const ModelConfig& m) {
    return {{"input_dim", m.input_dim},
            {"embed_dim", m.embed_dim},
            {"attention_dim", m.attention_dim},
            {"embed_depth", m.embed_depth},
            {"pooling", to_string(m.pooling)}};
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    std::vector<std::string> modes;
    for (auto m : c.sweep.modes) modes.push_back(to_string(m));
    return {
        {"data",
         {{"num_bags", c.data.num_bags},
          {"positive_fraction", c.data.positive_fraction},
          {"bag_size_range", c.data.bag_size_range},
          {"feature_dim", c.data.feature_dim},
          {"signal_dims", c.data.signal_dims},
          {"signal_shift", c.data.signal_shift},
          {"noise_std", c.data.noise_std},
          {"run_length_range", c.data.run_length_range},
          {"layout", to_string(c.data.layout)},
          {"seed", c.data.seed}}},
        {"model", to_json(c.model)},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"batch_size", c.train.batch_size},
          {"max_epochs", c.train.max_epochs},
          {"patience", c.train.patience},
          {"threshold", c.train.threshold},
          {"seed", c.train.seed}}},
        {"loss", {{"alpha", c.loss.alpha}, {"sa_mode", to_string(c.loss.sa_mode)}, {"reduction", to_string(c.loss.reduction)}}},
        {"split", {{"fractions", c.split.fractions}, {"seed", c.split.seed}}},
        {"sweep",
         {{"alphas", c.sweep.alphas},
          {"modes", modes},
          {"repeats", c.sweep.repeats},
          {"master_seed", c.sweep.master_seed},
          {"parallel", c.sweep.parallel}}},
    };
}

namespace detail {

// Copies `src` onto `dst`, rejecting keys that `dst` does not define.
inline void merge_known(nlohmann::json& dst, const nlohmann::json& src, const std::string& path) {
    if (!src.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
    for (const auto& [key, value] : src.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!dst.contains(key)) throw ConfigError("unknown config key '" + here + "'");
        if (dst[key].is_object())
            merge_known(dst[key], value, here);
        else
            dst[key] = value;
    }
}

template <class T>
T field(const nlohmann::json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("config field '") + section + "." + key + "' has the wrong type");
    }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& overrides) {
    nlohmann::json j = to_json(ExperimentConfig{});
    detail::merge_known(j, overrides, "");
    using detail::field;

    ExperimentConfig c;
    c.data.num_bags = field<std::size_t>(j, "data", "num_bags");
    c.data.positive_fraction = field<double>(j, "data", "positive_fraction");
    c.data.bag_size_range = field<std::array<std::size_t, 2>>(j, "data", "bag_size_range");
    c.data.feature_dim = field<std::size_t>(j, "data", "feature_dim");
    c.data.signal_dims = field<std::vector<std::size_t>>(j, "data", "signal_dims");
    c.data.signal_shift = field<double>(j, "data", "signal_shift");
    c.data.noise_std = field<double>(j, "data", "noise_std");
    c.data.run_length_range = field<std::array<std::size_t, 2>>(j, "data", "run_length_range");
    const auto layout = field<std::string>(j, "data", "layout");
    if (layout == "contiguous")
        c.data.layout = PositiveLayout::contiguous;
    else if (layout == "scattered")
        c.data.layout = PositiveLayout::scattered;
    else
        throw ConfigError("data.layout must be 'contiguous' or 'scattered'");
    c.data.seed = field<std::uint64_t>(j, "data", "seed");

    c.model.input_dim = field<std::size_t>(j, "model", "input_dim");
    c.model.embed_dim = field<std::size_t>(j, "model", "embed_dim");
    c.model.attention_dim = field<std::size_t>(j, "model", "attention_dim");
    c.model.embed_depth = field<std::size_t>(j, "model", "embed_depth");
    c.model.pooling = pooling_from_string(field<std::string>(j, "model", "pooling"));

    c.train.learning_rate = field<double>(j, "train", "learning_rate");
    c.train.batch_size = field<std::size_t>(j, "train", "batch_size");
    c.train.max_epochs = field<std::size_t>(j, "train", "max_epochs");
    c.train.patience = field<std::size_t>(j, "train", "patience");
    c.train.threshold = field<double>(j, "train", "threshold");
    c.train.seed = field<std::uint64_t>(j, "train", "seed");

    c.loss.alpha = field<double>(j, "loss", "alpha");
    c.loss.sa_mode = sa_mode_from_string(field<std::string>(j, "loss", "sa_mode"));
    const auto reduction = field<std::string>(j, "loss", "reduction");
    if (reduction == "sum")
        c.loss.reduction = LossReduction::sum;
    else if (reduction == "mean")
        c.loss.reduction = LossReduction::mean;
    else
        throw ConfigError("loss.reduction must be 'sum' or 'mean'");

    c.split.fractions = field<std::array<double, 3>>(j, "split", "fractions");
    c.split.seed = field<std::uint64_t>(j, "split", "seed");

    c.sweep.alphas = field<std::vector<double>>(j, "sweep", "alphas");
    c.sweep.modes.clear();
    for (const auto& m : field<std::vector<std::string>>(j, "sweep", "modes")) c.sweep.modes.push_back(sa_mode_from_string(m));
    c.sweep.repeats = field<std::size_t>(j, "sweep", "repeats");
    c.sweep.master_seed = field<std::uint64_t>(j, "sweep", "master_seed");
    c.sweep.parallel = field<std::size_t>(j, "sweep", "parallel");
    return c;
}

/// Turns `a.b=value` into {"a": {"b": value}}. The value is parsed as JSON
/// when possible and taken as a string otherwise.
inline nlohmann::json parse_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        parts.push_back(part);
    }
    nlohmann::json out = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) out = nlohmann::json{{*it, out}};
    return out;
}

/// Loads an optional config file and applies overrides in order.
inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config '" + path + "'");
        try {
            j = nlohmann::json::parse(is);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config '" + path + "': " + e.what());
        }
        if (!j.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");
    }
    for (const auto& o : overrides) j.merge_patch(parse_override(o));
    ExperimentConfig c = config_from_json(j);
    c.validate();
    return c;
}

}  // namespace sadmil
