#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result run(const std::string& args) {
    const std::string cmd = std::string(SADMIL_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {};
    Result r;
    std::array<char, 4096> buf;
    while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("sadmil_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        std::ofstream(dir_ / "small.json") << R"({
  "data": {"num_bags": 30, "bag_size_range": [6, 10], "run_length_range": [2, 4], "signal_shift": 2.0},
  "model": {"embed_dim": 6, "attention_dim": 4},
  "train": {"learning_rate": 0.005, "max_epochs": 3},
  "split": {"fractions": [0.6, 0.2, 0.2]}
})";
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string config() const { return "--config " + path("small.json"); }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, GenDataWritesBagsAndEcho) {
    const Result r = run("gen-data " + config() + " --seed 3 --out " + path("bags.jsonl"));
    ASSERT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("bags: 30"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("bags.jsonl.config.json")));
    std::ifstream is(path("bags.jsonl"));
    std::size_t lines = 0;
    for (std::string l; std::getline(is, l);) ++lines;
    EXPECT_EQ(lines, 30u);
    EXPECT_NE(slurp(path("bags.jsonl.config.json")).find("\"seed\": 3"), std::string::npos);
}

TEST_F(Cli, InvalidConfigExitsWithOne) {
    EXPECT_EQ(run("gen-data --set data.bag_size_range=[10,5] --out " + path("x.jsonl")).code, 1);
    EXPECT_EQ(run("gen-data --set data.unknown=1 --out " + path("x.jsonl")).code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
}

TEST_F(Cli, BadDataExitsWithTwo) {
    std::ofstream(path("bad.jsonl")) << R"({"id":"a","bag_label":0,"instances":[[1.0],[2.0]],"instance_labels":[0,1]})"
                                     << "\n";
    EXPECT_EQ(run("train " + config() + " --data " + path("bad.jsonl") + " --out " + path("run")).code, 2);
}

TEST_F(Cli, TrainIsDeterministicAndEvalAgrees) {
    ASSERT_EQ(run("train " + config() + " --out " + path("a")).code, 0);
    ASSERT_EQ(run("train " + config() + " --out " + path("b")).code, 0);
    for (const char* f : {"checkpoint.json", "report.json", "metrics.csv", "config.json", "test_bags.jsonl"}) {
        ASSERT_TRUE(fs::exists(dir_ / "a" / f)) << f;
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    }
    EXPECT_TRUE(fs::exists(dir_ / "a" / "timing.json"));

    const Result ev = run("eval --checkpoint " + path("a/checkpoint.json") + " --data " + path("a/test_bags.jsonl"));
    ASSERT_EQ(ev.code, 0);
    EXPECT_EQ(ev.out, slurp(dir_ / "a" / "metrics.csv"));
}

TEST_F(Cli, ResumeIsRejected) {
    ASSERT_EQ(run("train " + config() + " --out " + path("a")).code, 0);
    EXPECT_EQ(run("train " + config() + " --checkpoint " + path("a/checkpoint.json") + " --out " + path("c")).code, 1);
}

TEST_F(Cli, ExportAttentionWritesOneTracePerBag) {
    ASSERT_EQ(run("train " + config() + " --out " + path("a")).code, 0);
    ASSERT_EQ(run("export-attention --checkpoint " + path("a/checkpoint.json") + " --data " + path("a/test_bags.jsonl") +
                  " --out " + path("traces"))
                  .code,
              0);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "traces")) {
        ++files;
        EXPECT_EQ(slurp(e.path()).rfind("index,f,s,threshold,instance_truth\n", 0), 0u);
    }
    EXPECT_EQ(files, 6u);

    ASSERT_EQ(run("train " + config() + " --set model.pooling=max --set loss.alpha=0 --out " + path("m")).code, 0);
    EXPECT_EQ(run("export-attention --checkpoint " + path("m/checkpoint.json") + " --data " + path("m/test_bags.jsonl") +
                  " --out " + path("none"))
                  .code,
              1);
}

TEST_F(Cli, SweepWritesCompleteTables) {
    const Result r = run("sweep " + config() +
                         " --set sweep.alphas=[0,0.5] --set sweep.repeats=2 --set train.max_epochs=1 --parallel 2 --out " +
                         path("sw"));
    ASSERT_EQ(r.code, 0);
    std::ifstream is(dir_ / "sw" / "sweep.csv");
    std::string header;
    std::getline(is, header);
    EXPECT_EQ(header, "mode,alpha,repeat,level,acc,pre,rec,f1,auc");
    std::size_t rows = 0;
    for (std::string l; std::getline(is, l);) ++rows;
    EXPECT_EQ(rows, 16u);  // 2 modes x 2 alphas x 2 repeats x {scan, slice}
    EXPECT_TRUE(fs::exists(dir_ / "sw" / "sweep_summary.csv"));
}
