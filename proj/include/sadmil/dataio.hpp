#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sadmil/error.hpp"
#include "sadmil/tensor.hpp"

namespace sadmil {

/// One bag: an ordered run of instances sharing a single observed label.
/// Instance labels, when present, are only read by evaluation code.
struct Bag {
    std::string id;
    Tensor features;  // N x F, row i is instance i
    int label = 0;
    std::optional<std::vector<int>> instance_labels;

    std::size_t size() const { return features.empty() ? 0 : features.rows(); }
    std::size_t feature_dim() const { return features.empty() ? 0 : features.cols(); }

    friend bool operator==(const Bag&, const Bag&) = default;
};

/// Checks the bag invariants, including bag label == max(instance labels).
inline void validate_bag(const Bag& bag) {
    if (bag.features.rank() != 2 || bag.size() == 0)
        throw DataError("bag '" + bag.id + "' must hold at least one instance");
    if (bag.label != 0 && bag.label != 1)
        throw DataError("bag '" + bag.id + "' has label " + std::to_string(bag.label) + ", expected 0 or 1");
    if (!bag.instance_labels) return;
    const auto& y = *bag.instance_labels;
    if (y.size() != bag.size())
        throw DataError("bag '" + bag.id + "' has " + std::to_string(y.size()) + " instance labels for " +
                        std::to_string(bag.size()) + " instances");
    int hi = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0 && y[i] != 1)
            throw DataError("bag '" + bag.id + "' instance " + std::to_string(i) + " has label " +
                            std::to_string(y[i]));
        hi = std::max(hi, y[i]);
    }
    if (hi != bag.label)
        throw DataError("bag '" + bag.id + "' violates the MIL label relation: bag label " +
                        std::to_string(bag.label) + " but max instance label " + std::to_string(hi));
}

enum class PositiveLayout { contiguous, scattered };

struct SynthConfig {
    std::size_t num_bags = 200;
    double positive_fraction = 0.5;
    std::array<std::size_t, 2> bag_size_range{24, 57};
    std::size_t feature_dim = 10;
    std::vector<std::size_t> signal_dims{0, 1, 2};
    double signal_shift = 1.0;
    double noise_std = 1.0;
    std::array<std::size_t, 2> run_length_range{3, 8};
    PositiveLayout layout = PositiveLayout::contiguous;
    std::uint64_t seed = 7;

    void validate() const {
        std::vector<std::string> bad;
        if (num_bags == 0) bad.push_back("data.num_bags must be >= 1");
        if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
            bad.push_back("data.positive_fraction must lie in [0, 1]");
        if (bag_size_range[0] == 0) bad.push_back("data.bag_size_range: min must be >= 1");
        if (bag_size_range[0] > bag_size_range[1]) bad.push_back("data.bag_size_range: min > max");
        if (feature_dim == 0) bad.push_back("data.feature_dim must be >= 1");
        for (auto d : signal_dims)
            if (d >= feature_dim) bad.push_back("data.signal_dims: index " + std::to_string(d) + " >= feature_dim");
        if (!(noise_std > 0.0)) bad.push_back("data.noise_std must be > 0");
        if (!std::isfinite(signal_shift)) bad.push_back("data.signal_shift must be finite");
        if (run_length_range[0] == 0) bad.push_back("data.run_length_range: min must be >= 1");
        if (run_length_range[0] > run_length_range[1]) bad.push_back("data.run_length_range: min > max");
        if (run_length_range[1] > bag_size_range[0]) bad.push_back("data.run_length_range: max > bag_size_range min");
        if (bad.empty()) return;
        std::string msg = "invalid synthetic data config:";
        for (const auto& b : bad) msg += "\n  " + b;
        throw ConfigError(msg);
    }
};

/// Draws a synthetic dataset. Negative bags are pure background noise;
/// positive bags carry one stretch of shifted instances (contiguous, or
/// spread at random positions for PositiveLayout::scattered).
inline std::vector<Bag> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std);

    const auto num_pos = static_cast<std::size_t>(std::llround(cfg.positive_fraction * static_cast<double>(cfg.num_bags)));
    std::vector<int> labels(cfg.num_bags, 0);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(num_pos), 1);
    std::shuffle(labels.begin(), labels.end(), rng);

    std::vector<Bag> bags;
    bags.reserve(cfg.num_bags);
    for (std::size_t b = 0; b < cfg.num_bags; ++b) {
        const std::size_t n =
            std::uniform_int_distribution<std::size_t>(cfg.bag_size_range[0], cfg.bag_size_range[1])(rng);
        Tensor x({n, cfg.feature_dim});
        for (auto& v : x.values()) v = noise(rng);

        std::vector<int> y(n, 0);
        if (labels[b] == 1) {
            const std::size_t len =
                std::uniform_int_distribution<std::size_t>(cfg.run_length_range[0], cfg.run_length_range[1])(rng);
            if (cfg.layout == PositiveLayout::contiguous) {
                const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n - len)(rng);
                std::fill(y.begin() + static_cast<std::ptrdiff_t>(start),
                          y.begin() + static_cast<std::ptrdiff_t>(start + len), 1);
            } else {
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), 0);
                std::shuffle(order.begin(), order.end(), rng);
                for (std::size_t k = 0; k < len; ++k) y[order[k]] = 1;
            }
            for (std::size_t i = 0; i < n; ++i)
                if (y[i])
                    for (auto d : cfg.signal_dims) x.at(i, d) += cfg.signal_shift;
        }

        std::ostringstream id;
        id << "bag-" << std::setw(4) << std::setfill('0') << b;
        bags.push_back(Bag{id.str(), std::move(x), labels[b], std::move(y)});
    }
    return bags;
}

// ---------------------------------------------------------------------------
// JSON Lines serialization: one bag object per line.
//   {"id": str, "bag_label": 0|1, "instances": [[...], ...], "instance_labels": [...]}
// "instance_labels" is omitted when unknown. Doubles are written in shortest
// round-trip form, so load(save(x)) reproduces every bit.
// ---------------------------------------------------------------------------

inline nlohmann::json bag_to_json(const Bag& bag) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < bag.size(); ++i) {
        const auto row = bag.features.values().subspan(i * bag.feature_dim(), bag.feature_dim());
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    nlohmann::json j{{"id", bag.id}, {"bag_label", bag.label}, {"instances", std::move(rows)}};
    if (bag.instance_labels) j["instance_labels"] = *bag.instance_labels;
    return j;
}

inline Bag bag_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DataError("expected a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "id" && key != "bag_label" && key != "instances" && key != "instance_labels")
            throw DataError("unknown field '" + key + "'");
    if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field 'id'");
    if (!j.contains("bag_label") || !j["bag_label"].is_number_integer())
        throw DataError("missing integer field 'bag_label'");
    if (!j.contains("instances") || !j["instances"].is_array() || j["instances"].empty())
        throw DataError("field 'instances' must be a non-empty array");

    Bag bag;
    bag.id = j["id"].get<std::string>();
    bag.label = j["bag_label"].get<int>();
    const auto& rows = j["instances"];
    const std::size_t n = rows.size();
    if (!rows[0].is_array() || rows[0].empty()) throw DataError("instance 0 must be a non-empty array");
    const std::size_t f = rows[0].size();
    std::vector<double> data;
    data.reserve(n * f);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& row = rows[i];
        if (!row.is_array() || row.size() != f)
            throw DataError("instance " + std::to_string(i) + " does not have " + std::to_string(f) + " features");
        for (const auto& v : row) {
            if (!v.is_number()) throw DataError("instance " + std::to_string(i) + " has a non-numeric feature");
            data.push_back(v.get<double>());
        }
    }
    bag.features = Tensor({n, f}, std::move(data));
    if (j.contains("instance_labels")) {
        if (!j["instance_labels"].is_array()) throw DataError("'instance_labels' must be an array");
        std::vector<int> y;
        for (const auto& v : j["instance_labels"]) {
            if (!v.is_number_integer()) throw DataError("instance labels must be integers");
            y.push_back(v.get<int>());
        }
        bag.instance_labels = std::move(y);
    }
    validate_bag(bag);
    return bag;
}

inline void write_bags(std::ostream& os, const std::vector<Bag>& bags) {
    for (const auto& bag : bags) os << bag_to_json(bag).dump() << '\n';
}

inline std::vector<Bag> read_bags(std::istream& is) {
    std::vector<Bag> bags;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            bags.push_back(bag_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
        } catch (const Error& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return bags;
}

inline void save_bags(const std::vector<Bag>& bags, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    write_bags(os, bags);
    if (!os) throw DataError("failed writing '" + path + "'");
}

inline std::vector<Bag> load_bags(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open '" + path + "'");
    try {
        return read_bags(is);
    } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
    }
}

struct DatasetSplits {
    std::vector<Bag> train, val, test;
};

/// Seeded shuffle, then cut at bag granularity. Validation and test get
/// floor(n * fraction) bags each; the remainder goes to training.
inline DatasetSplits split(const std::vector<Bag>& bags, std::array<double, 3> fractions, std::uint64_t seed) {
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must lie in [0, 1]");
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(total));

    const std::size_t n = bags.size();
    const auto count = [n](double f) {
        return static_cast<std::size_t>(std::floor(static_cast<double>(n) * f + 1e-9));
    };
    const std::size_t n_val = count(fractions[1]);
    const std::size_t n_test = count(fractions[2]);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplits out;
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t k = 0; k < n; ++k) {
        const Bag& b = bags[order[k]];
        if (k < n_train)
            out.train.push_back(b);
        else if (k < n_train + n_val)
            out.val.push_back(b);
        else
            out.test.push_back(b);
    }
    return out;
}

}  // namespace sadmil
