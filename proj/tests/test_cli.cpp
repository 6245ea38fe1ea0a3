#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "graphvl/embed_io.hpp"
#include "test_util.hpp"

namespace {

struct Run {
    int status = -1;
    std::string out;  // stdout and stderr interleaved
};

Run cli(const std::string& args) {
    const std::string cmd = std::string(GRAPHVL_CLI_PATH) + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t got;
    while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// run-all seeds the generator from the config seed; gen-synthetic takes its own.
const std::string kSmallData = "--classes 6 --known 4 --per-class 20 --dim 8 --separation 6";
const std::string kFast = "--epochs 3 --batch-size 32 --seed 5";

} // namespace

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").status, 0); }

TEST(Cli, UnknownFlagIsBadInput) {
    const auto r = cli("run-all --synthetic --no-such-flag");
    EXPECT_EQ(r.status, 2);
}

TEST(Cli, MissingSubcommandIsBadInput) { EXPECT_EQ(cli("").status, 2); }

TEST(Cli, MissingFileIsBadInput) {
    TempDir dir;
    const auto r = cli("train --labeled /nonexistent/a.gvle --class-emb /nonexistent/b.gvle --out-dir " +
                       dir.path().string());
    EXPECT_EQ(r.status, 2);
    EXPECT_NE(r.out.find("FileNotFound"), std::string::npos) << r.out;
}

TEST(Cli, BadConfigValueIsBadInput) {
    TempDir dir;
    EXPECT_EQ(cli("run-all --synthetic " + kSmallData + " --gcn-layers 7 --out-dir " + dir.path().string()).status, 2);
}

TEST(Cli, GenSyntheticWritesThreeFiles) {
    TempDir dir;
    const auto r = cli("gen-synthetic " + kSmallData + " --seed 1 --out-dir " + dir.path().string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto labeled = graphvl::read_embedding_file(dir / "labeled.gvle");
    const auto unlabeled = graphvl::read_embedding_file(dir / "unlabeled.gvle");
    const auto classes = graphvl::read_embedding_file(dir / "class_emb.gvle");
    EXPECT_EQ(classes.data.rows(), 4u);  // known classes only
    EXPECT_EQ(labeled.data.cols(), 8u);
    EXPECT_EQ(labeled.data.rows(), 80u);
    EXPECT_EQ(unlabeled.data.rows(), 120u);
}

TEST(Cli, RunAllEchoesConfigAndWritesOutputs) {
    TempDir dir;
    const auto r = cli("run-all --synthetic " + kSmallData + " " + kFast + " --margin-alpha 0.25 --out-dir " +
                       dir.path().string());
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("margin_alpha=0.25"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("epochs=3"), std::string::npos);
    const auto config = slurp(dir / "config.txt");
    EXPECT_NE(config.find("margin_alpha=0.25"), std::string::npos);
    EXPECT_NE(config.find("seed=5"), std::string::npos);
    for (const char* f : {"checkpoint.gvlp", "loss_trace.csv", "assignments.csv", "report.txt", "report.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const std::regex four_decimals(R"(acc_all=\d\.\d{4}\n)");
    EXPECT_TRUE(std::regex_search(r.out, four_decimals)) << r.out;
    EXPECT_TRUE(std::regex_search(slurp(dir / "report.txt"), four_decimals));
    const auto trace = slurp(dir / "loss_trace.csv");
    EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 4);
}

TEST(Cli, ConfigFileIsReadAndFlagsOverrideIt) {
    TempDir dir;
    {
        std::ofstream cfg(dir / "in.txt");
        cfg << "# comment\nepochs=2\ntemperature=0.5\n";
    }
    const auto r = cli("run-all --synthetic " + kSmallData + " --config " + (dir / "in.txt").string() +
                       " --temperature 0.2 --out-dir " + (dir / "out").string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto config = slurp(dir / "out" / "config.txt");
    EXPECT_NE(config.find("epochs=2"), std::string::npos) << config;
    EXPECT_NE(config.find("temperature=0.2\n"), std::string::npos) << config;
}

TEST(Cli, StepwiseChainMatchesRunAll) {
    TempDir dir;
    const auto d = dir.path().string();
    ASSERT_EQ(cli("gen-synthetic " + kSmallData + " --seed 1 --out-dir " + d + "/data").status, 0);
    const std::string inputs = " --labeled " + d + "/data/labeled.gvle --class-emb " + d + "/data/class_emb.gvle";
    const std::string unlabeled = " --unlabeled " + d + "/data/unlabeled.gvle";

    auto r = cli("train" + inputs + " " + kFast + " --out-dir " + d + "/train");
    ASSERT_EQ(r.status, 0) << r.out;
    r = cli("cluster --checkpoint " + d + "/train/checkpoint.gvlp" + inputs + unlabeled + " --out-dir " + d + "/cluster");
    ASSERT_EQ(r.status, 0) << r.out;
    r = cli("eval --assignments " + d + "/cluster/assignments.csv" + unlabeled + " --known 4 --out-dir " + d + "/eval");
    ASSERT_EQ(r.status, 0) << r.out;
    r = cli("run-all" + inputs + unlabeled + " " + kFast + " --out-dir " + d + "/all");
    ASSERT_EQ(r.status, 0) << r.out;

    EXPECT_EQ(slurp(dir / "train" / "checkpoint.gvlp"), slurp(dir / "all" / "checkpoint.gvlp"));
    EXPECT_EQ(slurp(dir / "cluster" / "assignments.csv"), slurp(dir / "all" / "assignments.csv"));
    EXPECT_EQ(slurp(dir / "eval" / "report.csv"), slurp(dir / "all" / "report.csv"));
}

TEST(Cli, ResumeMatchesStraightTraining) {
    TempDir dir;
    const auto d = dir.path().string();
    ASSERT_EQ(cli("gen-synthetic " + kSmallData + " --seed 1 --out-dir " + d + "/data").status, 0);
    const std::string inputs = " --labeled " + d + "/data/labeled.gvle --class-emb " + d + "/data/class_emb.gvle";
    ASSERT_EQ(cli("train" + inputs + " --epochs 4 --seed 5 --out-dir " + d + "/straight").status, 0);
    ASSERT_EQ(cli("train" + inputs + " --epochs 2 --seed 5 --out-dir " + d + "/half").status, 0);
    const auto r = cli("train" + inputs + " --epochs 4 --resume " + d + "/half/checkpoint.gvlp --out-dir " + d + "/resumed");
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_EQ(slurp(dir / "straight" / "checkpoint.gvlp"), slurp(dir / "resumed" / "checkpoint.gvlp"));
}

TEST(Cli, EstimateKWritesInertia) {
    TempDir dir;
    const auto r = cli("run-all --synthetic " + kSmallData + " " + kFast + " --estimate-k --k-min 4 --k-max 10 --out-dir " +
                       dir.path().string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto inertia = slurp(dir / "inertia.csv");
    EXPECT_EQ(inertia.rfind("k,inertia,elbow_distance\n", 0), 0u);
    EXPECT_EQ(std::count(inertia.begin(), inertia.end(), '\n'), 8);
    EXPECT_TRUE(std::regex_search(r.out, std::regex(R"(k=\d+)")));
}

TEST(Cli, ScanBelowKnownClassesIsBadInput) {
    TempDir dir;
    const auto r = cli("run-all --synthetic " + kSmallData + " " + kFast + " --estimate-k --k-min 3 --k-max 9 --out-dir " +
                       dir.path().string());
    EXPECT_EQ(r.status, 2) << r.out;
}

TEST(Cli, ThreadCountDoesNotChangeOutputs) {
    TempDir dir;
    const auto d = dir.path().string();
    ASSERT_EQ(cli("--threads 1 run-all --synthetic " + kSmallData + " " + kFast + " --out-dir " + d + "/t1").status, 0);
    ASSERT_EQ(cli("--threads 8 run-all --synthetic " + kSmallData + " " + kFast + " --out-dir " + d + "/t8").status, 0);
    for (const char* f : {"checkpoint.gvlp", "assignments.csv", "report.txt"}) {
        EXPECT_EQ(slurp(dir / "t1" / f), slurp(dir / "t8" / f)) << f;
    }
}
