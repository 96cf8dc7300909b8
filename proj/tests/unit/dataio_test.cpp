#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "sadmil/dataio.hpp"

using namespace sadmil;

namespace {

SynthConfig small_config() {
    SynthConfig c;
    c.num_bags = 40;
    return c;
}

std::vector<std::size_t> positive_positions(const Bag& b) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < b.size(); ++i)
        if ((*b.instance_labels)[i]) out.push_back(i);
    return out;
}

}  // namespace

TEST(Generate, RespectsConfiguredShape) {
    const SynthConfig c = small_config();
    const auto bags = generate(c);
    ASSERT_EQ(bags.size(), 40u);
    std::size_t pos = 0;
    for (const auto& b : bags) {
        EXPECT_NO_THROW(validate_bag(b));
        EXPECT_GE(b.size(), 24u);
        EXPECT_LE(b.size(), 57u);
        EXPECT_EQ(b.feature_dim(), 10u);
        ASSERT_TRUE(b.instance_labels.has_value());
        pos += static_cast<std::size_t>(b.label);
        const auto p = positive_positions(b);
        if (b.label == 0) {
            EXPECT_TRUE(p.empty());
        } else {
            EXPECT_GE(p.size(), 3u);
            EXPECT_LE(p.size(), 8u);
            EXPECT_EQ(p.back() - p.front() + 1, p.size()) << "positives must form one run in " << b.id;
        }
    }
    EXPECT_EQ(pos, 20u);
    EXPECT_EQ(bags.front().id, "bag-0000");
}

TEST(Generate, ScatteredLayoutKeepsCounts) {
    SynthConfig c = small_config();
    c.layout = PositiveLayout::scattered;
    c.run_length_range = {8, 8};
    std::size_t split_runs = 0;
    for (const auto& b : generate(c)) {
        if (b.label == 0) continue;
        const auto p = positive_positions(b);
        EXPECT_EQ(p.size(), 8u);
        if (p.back() - p.front() + 1 != p.size()) ++split_runs;
    }
    EXPECT_GT(split_runs, 0u);
}

TEST(Generate, SignalShiftsOnlyPositiveInstances) {
    SynthConfig c = small_config();
    c.noise_std = 1e-9;
    c.signal_shift = 5.0;
    for (const auto& b : generate(c))
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double expect = (*b.instance_labels)[i] ? 5.0 : 0.0;
            EXPECT_NEAR(b.features.at(i, 0), expect, 1e-6);
            EXPECT_NEAR(b.features.at(i, 2), expect, 1e-6);
            EXPECT_NEAR(b.features.at(i, 3), 0.0, 1e-6);
        }
}

TEST(Generate, DeterministicPerSeed) {
    SynthConfig c = small_config();
    const auto a = generate(c);
    EXPECT_EQ(a, generate(c));
    c.seed = 8;
    EXPECT_NE(a, generate(c));
}

TEST(Generate, InvalidConfigNamesTheField) {
    SynthConfig c;
    c.bag_size_range = {10, 5};
    try {
        generate(c);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("data.bag_size_range"), std::string::npos);
    }
    c = SynthConfig{};
    c.signal_dims = {12};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(JsonLines, RoundTripIsBitExact) {
    auto bags = generate(small_config());
    bags[1].instance_labels.reset();
    bags[2].features.at(0, 0) = 0.1 + 0.2;
    bags[3].features.at(0, 1) = std::numeric_limits<double>::denorm_min();
    bags[3].features.at(0, 2) = -1.7976931348623157e308;
    std::stringstream ss;
    write_bags(ss, bags);
    EXPECT_EQ(read_bags(ss), bags);

    const auto path = (std::filesystem::temp_directory_path() / "sadmil_dataio_test.jsonl").string();
    save_bags(bags, path);
    EXPECT_EQ(load_bags(path), bags);
    std::filesystem::remove(path);
}

TEST(JsonLines, RejectsLabelInconsistency) {
    std::stringstream ss(R"({"id":"a","bag_label":0,"instances":[[1.0],[2.0]],"instance_labels":[0,1]})");
    try {
        read_bags(ss);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("MIL label relation"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(JsonLines, ReportsLineNumberOfMalformedInput) {
    std::stringstream ss;
    ss << R"({"id":"a","bag_label":0,"instances":[[1.0]]})" << "\n\n"
       << R"({"id":"b","bag_label":1,"instances":[[1.0]]})" << "\n"
       << "{not json\n";
    try {
        read_bags(ss);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
    }
}

TEST(JsonLines, RejectsStructuralProblems) {
    const char* bad[] = {
        R"({"id":"a","bag_label":0,"instances":[]})",
        R"({"id":"a","bag_label":0,"instances":[[1.0],[1.0,2.0]]})",
        R"({"id":"a","bag_label":2,"instances":[[1.0]]})",
        R"({"id":"a","bag_label":0,"instances":[[1.0]],"extra":1})",
        R"({"id":"a","bag_label":1,"instances":[[1.0],[2.0]],"instance_labels":[1]})",
        R"({"bag_label":0,"instances":[[1.0]]})",
    };
    for (const char* line : bad) {
        std::stringstream ss(line);
        EXPECT_THROW(read_bags(ss), DataError) << line;
    }
}

TEST(JsonLines, MissingFileIsDataError) { EXPECT_THROW(load_bags("/nonexistent/bags.jsonl"), DataError); }

TEST(Split, CountsAndDisjointness) {
    const auto bags = generate(SynthConfig{.num_bags = 10});
    const DatasetSplits s = split(bags, {0.8, 0.1, 0.1}, 1);
    EXPECT_EQ(s.train.size(), 8u);
    EXPECT_EQ(s.val.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& b : *part) EXPECT_TRUE(ids.insert(b.id).second);
    EXPECT_EQ(ids.size(), 10u);
}

TEST(Split, DegenerateAndInvalidFractions) {
    const auto bags = generate(SynthConfig{.num_bags = 10});
    const DatasetSplits all = split(bags, {1.0, 0.0, 0.0}, 3);
    EXPECT_EQ(all.train.size(), 10u);
    EXPECT_TRUE(all.val.empty());
    EXPECT_TRUE(all.test.empty());
    EXPECT_THROW(split(bags, {0.5, 0.2, 0.2}, 3), ConfigError);
    EXPECT_THROW(split(bags, {1.2, -0.1, -0.1}, 3), ConfigError);
}

TEST(Split, DeterministicPerSeed) {
    const auto bags = generate(SynthConfig{.num_bags = 30});
    const auto ids = [](const std::vector<Bag>& v) {
        std::vector<std::string> out;
        for (const auto& b : v) out.push_back(b.id);
        return out;
    };
    EXPECT_EQ(ids(split(bags, {0.6, 0.2, 0.2}, 5).test), ids(split(bags, {0.6, 0.2, 0.2}, 5).test));
    EXPECT_NE(ids(split(bags, {0.6, 0.2, 0.2}, 5).train), ids(split(bags, {0.6, 0.2, 0.2}, 6).train));
}
