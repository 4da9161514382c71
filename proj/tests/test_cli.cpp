#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
    static const fs::path d = [] {
        auto p = fs::temp_directory_path() / ("stconfound_cli_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return d;
}

int run(const std::string& args) {
    const std::string cmd = std::string(STCONFOUND_CLI) + " " + args + " > " + (work_dir() / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        sim = work_dir() / "sim";
        ASSERT_EQ(run("simulate --seed 5 --out " + sim.string()), 0) << slurp(work_dir() / "log.txt");
    }
    static void TearDownTestSuite() { fs::remove_all(work_dir()); }

    static std::string inputs() {
        return "--data " + (sim / "dataset.csv").string() + " --adjacency " + (sim / "adjacency.txt").string();
    }

    static fs::path sim;
};

fs::path Cli::sim;

}  // namespace

TEST_F(Cli, SimulateWritesDatasetTruthAndAdjacency) {
    EXPECT_TRUE(fs::exists(sim / "dataset.csv"));
    EXPECT_TRUE(fs::exists(sim / "truth.json"));
    EXPECT_TRUE(fs::exists(sim / "adjacency.txt"));
    const auto again = work_dir() / "sim2";
    ASSERT_EQ(run("simulate --seed 5 --out " + again.string()), 0);
    EXPECT_EQ(slurp(sim / "dataset.csv"), slurp(again / "dataset.csv"));
    EXPECT_EQ(slurp(sim / "truth.json"), slurp(again / "truth.json"));
}

TEST_F(Cli, ScenarioFileAndReplicateStudy) {
    const auto scen = work_dir() / "scenario.txt";
    std::ofstream(scen) << "grid = 3x3\nperiods = 4\nbeta = -0.2\nrho = 0.8\nseed = 3\n";
    const auto out = work_dir() / "study";
    ASSERT_EQ(run("simulate --scenario " + scen.string() + " --replicates 3 --model st1,st2 --out " + out.string()), 0)
        << slurp(work_dir() / "log.txt");
    const auto csv = slurp(out / "study.csv");
    EXPECT_NE(csv.find("st2,x1"), std::string::npos) << csv;
    EXPECT_TRUE(fs::exists(out / "study.json"));
}

TEST_F(Cli, FitWritesResultFiles) {
    const auto out = work_dir() / "fit1";
    ASSERT_EQ(run("fit " + inputs() + " --model st1 --out " + out.string()), 0) << slurp(work_dir() / "log.txt");
    EXPECT_TRUE(fs::exists(out / "st1.json"));
    EXPECT_TRUE(fs::exists(out / "st1_coefficients.csv"));
    EXPECT_TRUE(fs::exists(out / "st1_risks.csv"));
}

TEST_F(Cli, WarmStartFromSt2) {
    const auto out = work_dir() / "warm";
    ASSERT_EQ(run("fit " + inputs() + " --model st2 --out " + out.string()), 0) << slurp(work_dir() / "log.txt");
    ASSERT_EQ(run("fit " + inputs() + " --model st3 --restrict spatial --warm-start " + (out / "st2.json").string() +
                  " --out " + out.string()),
              0)
        << slurp(work_dir() / "log.txt");
    EXPECT_TRUE(fs::exists(out / "st3.json"));
}

TEST_F(Cli, CompareWritesTable) {
    const auto out = work_dir() / "cmp";
    ASSERT_EQ(run("compare " + inputs() + " --model st1,st2,st3,st4 --tol 1e-5 --out " + out.string()), 0)
        << slurp(work_dir() / "log.txt");
    const auto csv = slurp(out / "comparison.csv");
    for (const char* m : {"st1,", "st2,", "st3,", "st4,"}) EXPECT_NE(csv.find(m), std::string::npos) << csv;
    EXPECT_TRUE(fs::exists(out / "comparison.json"));
    EXPECT_TRUE(fs::exists(out / "st4_random_effects.csv"));
}

TEST_F(Cli, DiagnoseWritesCorrelations) {
    const auto out = work_dir() / "diag";
    ASSERT_EQ(run("diagnose " + inputs() + " --out " + out.string()), 0) << slurp(work_dir() / "log.txt");
    EXPECT_NE(slurp(out / "correlations.csv").find("x1,spatial,1,"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
    const auto out = (work_dir() / "codes").string();
    EXPECT_EQ(run("fit " + inputs() + " --model st9 --out " + out), 2);
    EXPECT_EQ(run("fit " + inputs() + " --model st1 --bogus --out " + out), 2);
    EXPECT_EQ(run("fit --data /nonexistent/d.csv --adjacency " + (sim / "adjacency.txt").string() + " --model st1 --out " + out), 4);

    const auto gap = work_dir() / "gap.csv";
    std::string text = slurp(sim / "dataset.csv");
    const auto second_line = text.find('\n') + 1;
    text.erase(second_line, text.find('\n', second_line) - second_line + 1);
    std::ofstream(gap) << text;
    EXPECT_EQ(run("fit --data " + gap.string() + " --adjacency " + (sim / "adjacency.txt").string() + " --model st1 --out " + out), 2);

    EXPECT_EQ(run("fit " + inputs() + " --model st2 --max-iter 1 --out " + out), 3);
}
