#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "protofuse/cli.hpp"

namespace protofuse {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "protofuse");
  std::vector<const char*> argv;
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  std::ostringstream out;
  std::ostringstream err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

int count_lines_starting(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    n += line.rfind(prefix, 0) == 0 ? 1 : 0;
  }
  return n;
}

const std::regex kResultLine(R"(^RESULT \S+ acc=[0-9.eE+-]+ ci=[0-9.eE+-]+ n=[0-9]+$)");

// A small synthetic dataset plus a run config using small layers.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("protofuse_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    const CliRun gen = run({"gen-synth", "--classes", "40", "--instances", "20", "--dim", "10",
                         "--modality", "label:6:0.9", "--modality", "description:5:0.9",
                         "--seed", "3", "--out", (dir_ / "data").string()});
    ASSERT_EQ(gen.code, 0) << gen.err;
    std::ofstream(dir_ / "data" / "run.cfg")
        << slurp(dir_ / "data" / "dataset.cfg")
        << "embed_dim=16\nvisual_hidden=16\nsemantic_hidden=8\nattention_hidden=8\n"
           "query=5\neval_episodes=20\n";
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string config() const { return (dir_ / "data" / "run.cfg").string(); }
  fs::path dir_;
};

TEST_F(CliTest, GenSynthWritesDataset) {
  for (const char* f : {"features.fslfeat", "label.fslsem", "description.fslsem",
                        "split.fslsplit", "dataset.cfg"}) {
    EXPECT_TRUE(fs::exists(dir_ / "data" / f)) << f;
  }
  const std::string split = slurp(dir_ / "data" / "split.fslsplit");
  EXPECT_NE(split.find("[train]"), std::string::npos);
}

TEST_F(CliTest, TrainThenEval) {
  const std::string ckpt = (dir_ / "m.ckpt").string();
  const CliRun t = run({"train", "--config", config(), "--branches", "l/l,d/v",
                     "--branch-losses", "1", "--episodes", "20", "--out", ckpt});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("trained 20 episodes"), std::string::npos) << t.out;
  ASSERT_TRUE(fs::exists(ckpt));

  const CliRun e = run({"eval", "--config", config(), "--branches", "l/l,d/v",
                     "--branch-losses", "1", "--checkpoint", ckpt});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("accuracy:"), std::string::npos);
  EXPECT_NE(e.out.find("mean alpha:"), std::string::npos);
  ASSERT_EQ(count_lines_starting(e.out, "RESULT eval "), 1) << e.out;

  // Same command, same report.
  EXPECT_EQ(run({"eval", "--config", config(), "--branches", "l/l,d/v",
                 "--branch-losses", "1", "--checkpoint", ckpt}).out, e.out);

  const CliRun mismatch = run({"eval", "--config", config(), "--branches", "l/l",
                            "--checkpoint", ckpt});
  EXPECT_EQ(mismatch.code, 4);
}

TEST_F(CliTest, EvalEchoesProtocol) {
  const std::string ckpt = (dir_ / "v.ckpt").string();
  ASSERT_EQ(run({"train", "--config", config(), "--episodes", "0", "--out", ckpt}).code, 0);
  const CliRun e = run({"eval", "--config", config(), "--checkpoint", ckpt, "--episodes",
                     "1000", "--way", "5", "--shot", "1", "--query", "15"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("protocol: 5-way 1-shot, 15 queries/class, 1000 episodes, split=test"),
            std::string::npos)
      << e.out;
  EXPECT_NE(e.out.find("n=1000"), std::string::npos);
}

TEST_F(CliTest, AblateOneRowPerCell) {
  std::ofstream(dir_ / "grid.txt") << "# ablation grid\n"
                                      "a - 0\nb l/l 0\nd d/d 0\ne l/l,d/v 0\nf l/l,d/v 1\n"
                                      "i l/l,d/v,d/l 1\n";
  const std::string tsv = (dir_ / "rows.tsv").string();
  const CliRun a = run({"ablate", "--config", config(), "--grid", (dir_ / "grid.txt").string(),
                     "--train-episodes", "5", "--episodes", "10", "--out", tsv});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(count_lines_starting(a.out, "RESULT "), 6);
  const std::string table = slurp(tsv);
  EXPECT_EQ(count_lines_starting(table, "label\tbranches\tbranch_losses\tacc\tci\tn"), 1);
  EXPECT_EQ(count_lines_starting(table, "e\tl/l,d/v\t0\t"), 1);
  EXPECT_EQ(count_lines_starting(table, "i\tl/l,d/v,d/l\t1\t"), 1);
  EXPECT_EQ(count_lines_starting(table, "a\t-\t0\t"), 1);
  // Bit-exact reproducibility of the whole grid.
  const CliRun again = run({"ablate", "--config", config(), "--grid", (dir_ / "grid.txt").string(),
                         "--train-episodes", "5", "--episodes", "10"});
  EXPECT_EQ(again.out, a.out);
}

TEST_F(CliTest, ResultLinesAreMachineReadable) {
  std::ofstream(dir_ / "grid.txt") << "a - 0\nb l/l 0\n";
  const CliRun a = run({"ablate", "--config", config(), "--grid", (dir_ / "grid.txt").string(),
                     "--train-episodes", "2", "--episodes", "5"});
  ASSERT_EQ(a.code, 0) << a.err;
  std::istringstream in(a.out);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.rfind("RESULT", 0) == 0) {
      EXPECT_TRUE(std::regex_match(line, kResultLine)) << line;
      ++n;
    }
  }
  EXPECT_EQ(n, 2);
}

TEST_F(CliTest, ErrorExitCodes) {
  EXPECT_EQ(run({"train", "--bogus"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"eval", "--config", config()}).code, 2);  // --checkpoint missing
  EXPECT_EQ(run({"train", "--config", config(), "--branches", "x/y"}).code, 3);
  EXPECT_EQ(run({"train", "--config", config(), "--way", "1"}).code, 3);
  EXPECT_EQ(run({"eval", "--config", config(), "--checkpoint",
                 (dir_ / "none.ckpt").string()}).code, 4);
  std::ofstream(dir_ / "bad.cfg") << "colour=blue\n";
  const CliRun bad = run({"train", "--config", (dir_ / "bad.cfg").string()});
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.err.find("colour"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, CheckGradReportsWorstError) {
  const CliRun g = run({"check-grad"});
  EXPECT_TRUE(g.code == 0 || g.code == 1);
  EXPECT_EQ(count_lines_starting(g.out, "config '"), 16);
  EXPECT_EQ(count_lines_starting(g.out, "GRADCHECK "), 1);
  EXPECT_EQ(g.code == 0, g.out.find("GRADCHECK PASS") != std::string::npos);
}

TEST_F(CliTest, BinarySmoke) {
  const std::string cmd = std::string(PROTOFUSE_CLI_PATH) + " train --config " + config() +
                          " --branches l/l --episodes 3 --out " + (dir_ / "b.ckpt").string() +
                          " > " + (dir_ / "log.txt").string() + " 2>&1";
  EXPECT_EQ(std::system(cmd.c_str()), 0) << slurp(dir_ / "log.txt");
  EXPECT_TRUE(fs::exists(dir_ / "b.ckpt"));
  const std::string bad = std::string(PROTOFUSE_CLI_PATH) + " --nope > /dev/null 2>&1";
  const int status = std::system(bad.c_str());
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
}

}  // namespace
}  // namespace protofuse
