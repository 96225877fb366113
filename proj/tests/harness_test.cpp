#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "protofuse/error.hpp"
#include "protofuse/harness.hpp"

namespace protofuse {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            ("protofuse_harness_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

SynthSpec small_spec(double rho = 0.9) {
  SynthSpec spec;
  spec.n_classes = 30;
  spec.instances_per_class = 20;
  spec.feature_dim = 12;
  spec.centroid_std = 1.0;
  spec.instance_std = 1.5;
  spec.modalities = {{Modality::kLabel, 8, rho}, {Modality::kDescription, 6, rho}};
  spec.seed = 5;
  return spec;
}

RunConfig small_config(const std::string& branches = "l/l", bool losses = false) {
  RunConfig c;
  c.way = 5;
  c.shot = 1;
  c.query = 5;
  c.branches = branches;
  c.branch_losses = losses;
  c.train_episodes = 30;
  c.eval_episodes = 50;
  c.embed_dim = 16;
  c.visual_hidden = 16;
  c.semantic_hidden = 12;
  c.attention_hidden = 12;
  c.seed = 17;
  c.synth = small_spec();
  return c;
}

bool same_parameters(FusionModel& a, FusionModel& b) {
  const auto pa = a.parameter_views();
  const auto pb = b.parameter_views();
  if (pa.size() != pb.size()) {
    return false;
  }
  for (std::size_t t = 0; t < pa.size(); ++t) {
    if (!std::equal(pa[t].begin(), pa[t].end(), pb[t].begin(), pb[t].end())) {
      return false;
    }
  }
  return true;
}

void expect_same_report(const EvalReport& a, const EvalReport& b) {
  EXPECT_EQ(a.episode_accuracies, b.episode_accuracies);
  EXPECT_EQ(a.mean_accuracy, b.mean_accuracy);
  EXPECT_EQ(a.ci95, b.ci95);
  EXPECT_EQ(a.mean_alpha, b.mean_alpha);
  EXPECT_EQ(a.protocol, b.protocol);
  EXPECT_EQ(a.branches, b.branches);
}

TEST(Train, ZeroEpisodesIsInitialization) {
  RunConfig c = small_config("l/l,d/v");
  c.train_episodes = 0;
  const FewShotDataset ds = load_run_dataset(c);
  TrainResult r = train(c, ds);
  EXPECT_TRUE(r.losses.empty());
  Rng init(TrainSeeds::for_run(c.seed).init);
  FusionModel fresh = init_fusion_model(init, c.branch_config(), c.model_shape(ds));
  EXPECT_TRUE(same_parameters(r.model, fresh));
}

TEST(Train, Deterministic) {
  const RunConfig c = small_config("l/l,d/v", true);
  const FewShotDataset ds = load_run_dataset(c);
  TrainResult a = train(c, ds);
  TrainResult b = train(c, ds);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(a.losses.size(), 30u);
  EXPECT_TRUE(same_parameters(a.model, b.model));
  RunConfig other = c;
  other.seed = 18;
  TrainResult d = train(other, ds);
  EXPECT_FALSE(same_parameters(a.model, d.model));
}

TEST(Train, ReducesLossOnInformativeData) {
  RunConfig c = small_config("l/l");
  c.synth->modalities = {{Modality::kLabel, 8, 1.0}};
  c.train_episodes = 600;
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  const std::size_t tenth = r.losses.size() / 10;
  double first = 0.0;
  double last = 0.0;
  for (std::size_t i = 0; i < tenth; ++i) {
    first += r.losses[i];
    last += r.losses[r.losses.size() - 1 - i];
  }
  EXPECT_LT(last, first);
}

TEST(Train, MismatchBeforeTraining) {
  RunConfig c = small_config("a/a");
  const FewShotDataset ds = load_run_dataset(small_config());
  EXPECT_THROW(train(c, ds), ConfigError);
  RunConfig bad = small_config();
  bad.adam.lr = 0.0;
  EXPECT_THROW(train(bad, ds), ConfigError);
}

TEST(Evaluate, ConstantPrototypesGiveChance) {
  RunConfig c = small_config("");
  c.train_episodes = 0;
  const FewShotDataset ds = load_run_dataset(c);
  TrainResult r = train(c, ds);
  r.model.visual_head.w2.setZero();  // every embedding equals the output bias
  const EvalReport report = evaluate(r.model, ds, SplitName::kTest, c);
  EXPECT_NEAR(report.mean_accuracy, 0.2, 1e-12);
}

TEST(Evaluate, IndistinguishableClassesNearChance) {
  RunConfig c = small_config("");
  c.synth->centroid_std = 0.0;
  c.eval_episodes = 400;
  c.train_episodes = 0;
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  const EvalReport report = evaluate(r.model, ds, SplitName::kTest, c);
  EXPECT_NEAR(report.mean_accuracy, 0.2, std::max(2.0 * report.ci95, 0.01));
}

TEST(Evaluate, PerfectSeparation) {
  RunConfig c = small_config("");
  c.synth->instance_std = 0.0;
  c.synth->centroid_std = 3.0;
  c.train_episodes = 0;
  c.visual_hidden = 64;
  c.embed_dim = 64;
  c.init_std = 0.3;
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  const EvalReport report = evaluate(r.model, ds, SplitName::kTest, c);
  EXPECT_EQ(report.mean_accuracy, 1.0);
  EXPECT_EQ(report.ci95, 0.0);
  EXPECT_FALSE(report.mean_alpha.has_value());
}

TEST(Evaluate, CiShrinksWithSqrtN) {
  RunConfig c = small_config("");
  c.train_episodes = 0;
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  c.eval_episodes = 250;
  const EvalReport small = evaluate(r.model, ds, SplitName::kTest, c);
  c.eval_episodes = 1000;
  const EvalReport large = evaluate(r.model, ds, SplitName::kTest, c);
  const double ratio = small.ci95 / large.ci95;
  EXPECT_GT(ratio, 2.0 * 0.85);
  EXPECT_LT(ratio, 2.0 * 1.15);
}

TEST(Evaluate, CiFormulaAndReproducibility) {
  const RunConfig c = small_config("l/l,d/v", true);
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  const EvalReport a = evaluate(r.model, ds, SplitName::kTest, c);
  const EvalReport b = evaluate(r.model, ds, SplitName::kTest, c);
  expect_same_report(a, b);

  const auto& x = a.episode_accuracies;
  ASSERT_EQ(x.size(), 50u);
  double mean = 0.0;
  for (const double v : x) {
    mean += v / static_cast<double>(x.size());
  }
  double ss = 0.0;
  for (const double v : x) {
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(x.size() - 1));
  EXPECT_NEAR(a.ci95, 1.96 * sd / std::sqrt(50.0), 1e-12);
  EXPECT_NEAR(a.mean_accuracy, mean, 1e-12);
  ASSERT_TRUE(a.mean_alpha.has_value());
  EXPECT_GT(*a.mean_alpha, 0.0);
  EXPECT_LT(*a.mean_alpha, 1.0);
  EXPECT_EQ(a.protocol, "5-way 1-shot, 5 queries/class, 50 episodes, split=test");
  EXPECT_EQ(a.branches, "l/l,d/v");
  EXPECT_TRUE(a.branch_losses);
}

TEST(Evaluate, CiHelperEdgeCases) {
  EXPECT_EQ(ci95_half_width(std::vector<double>{}), 0.0);
  EXPECT_EQ(ci95_half_width(std::vector<double>{0.3}), 0.0);
  EXPECT_EQ(ci95_half_width(std::vector<double>{0.5, 0.5, 0.5}), 0.0);
  EXPECT_NEAR(ci95_half_width(std::vector<double>{0.0, 1.0}),
              1.96 * std::sqrt(0.5) / std::sqrt(2.0), 1e-15);
}

TEST(PairedDifference, MatchesHandComputation) {
  EvalReport a;
  EvalReport b;
  a.episode_accuracies = {0.8, 0.6, 1.0};
  b.episode_accuracies = {0.6, 0.6, 0.8};
  const PairedDifference d = paired_difference(a, b);
  EXPECT_NEAR(d.mean, 0.4 / 3.0, 1e-15);
  const double m = 0.4 / 3.0;
  const double sd = std::sqrt(((0.2 - m) * (0.2 - m) + m * m + (0.2 - m) * (0.2 - m)) / 2.0);
  EXPECT_NEAR(d.ci95, 1.96 * sd / std::sqrt(3.0), 1e-12);
  b.episode_accuracies.pop_back();
  EXPECT_THROW(paired_difference(a, b), ContractError);
}

TEST(Grid, ParsesTableRows) {
  const auto cells = parse_grid(
      "# label branches losses\n"
      "a - 0\n"
      "b l/l 0\n"
      "\n"
      "e l/l,d/v 0\n"
      "i l/l,d/v,d/l 1\n");
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].branches, "");
  EXPECT_EQ(cells[1].branches, "l/l");
  EXPECT_EQ(cells[2].branches, "l/l,d/v");
  EXPECT_EQ(cells[3].branches, "l/l,d/v,d/l");
  EXPECT_TRUE(cells[3].branch_losses);
  EXPECT_EQ(cells[3].label, "i");
}

TEST(Grid, Errors) {
  EXPECT_THROW(parse_grid("a - 0\na l/l 0\n"), ConfigError);
  EXPECT_THROW(parse_grid("a l/x 0\n"), ConfigError);
  EXPECT_THROW(parse_grid("a l/l 2\n"), ConfigError);
  EXPECT_THROW(parse_grid("a l/l\n"), ConfigError);
  EXPECT_THROW(parse_grid("a l/l 0 extra\n"), ConfigError);
  try {
    parse_grid("a - 0\nb d/l 0\n", "g.txt");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("g.txt:2"), std::string::npos);
  }
  EXPECT_THROW(load_grid("/nonexistent/grid.txt"), ConfigError);
}

TEST(Ablate, RowsEchoCellsInOrder) {
  RunConfig base = small_config();
  base.train_episodes = 5;
  base.eval_episodes = 10;
  const FewShotDataset ds = load_run_dataset(base);
  const auto grid = parse_grid("a - 0\nb l/l 0\ne l/l,d/v 0\ni l/l,d/v,d/l 1\n");
  const auto rows = ablate(base, ds, grid);
  ASSERT_EQ(rows.size(), 4u);
  const std::vector<std::string> expected{"", "l/l", "l/l,d/v", "l/l,d/v,d/l"};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].cell.label, grid[i].label);
    EXPECT_EQ(rows[i].report.branches, expected[i]);
    EXPECT_EQ(rows[i].report.branch_losses, i == 3);
  }
}

TEST(Ablate, SingleCellEqualsTrainThenEvaluate) {
  const RunConfig base = small_config();
  const FewShotDataset ds = load_run_dataset(base);
  const auto grid = parse_grid("x l/l,d/v 1\n");
  const auto rows = ablate(base, ds, grid);
  RunConfig c = base;
  c.branches = "l/l,d/v";
  c.branch_losses = true;
  const TrainResult r = train(c, ds, TrainSeeds::for_cell(base.seed, "x"));
  expect_same_report(rows[0].report, evaluate(r.model, ds, SplitName::kTest, c));
}

TEST(Ablate, PermutationInvariantAndReproducible) {
  RunConfig base = small_config();
  base.train_episodes = 10;
  base.eval_episodes = 20;
  const FewShotDataset ds = load_run_dataset(base);
  const auto forward = parse_grid("a - 0\nb l/l 0\nf l/l,d/v 1\n");
  const auto backward = parse_grid("f l/l,d/v 1\nb l/l 0\na - 0\n");
  const auto x = ablate(base, ds, forward);
  const auto y = ablate(base, ds, backward);
  const auto z = ablate(base, ds, forward);
  for (std::size_t i = 0; i < 3; ++i) {
    expect_same_report(x[i].report, y[2 - i].report);
    expect_same_report(x[i].report, z[i].report);
  }
}

TEST(Ablate, InvalidCellFailsBeforeRunning) {
  const RunConfig base = small_config();
  const FewShotDataset ds = load_run_dataset(base);
  const std::vector<AblationCell> grid{{"a", "", false}, {"bad", "a/a", false}};
  EXPECT_THROW(ablate(base, ds, grid), ConfigError);
}

TEST(ResultLine, Format) {
  EvalReport r;
  r.mean_accuracy = 0.5;
  r.ci95 = 0.25;
  r.episodes = 1000;
  EXPECT_EQ(result_line("b", r), "RESULT b acc=0.5 ci=0.25 n=1000");
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const RunConfig c = small_config("l/l,d/v,d/l,v/l", true);
  const FewShotDataset ds = load_run_dataset(c);
  TrainResult r = train(c, ds);
  TempDir dir;
  const fs::path p = dir.path() / "m.ckpt";
  save_checkpoint(r.model, p);
  FusionModel back = load_checkpoint(p);
  EXPECT_TRUE(same_parameters(r.model, back));
  EXPECT_EQ(back.config.grammar(), r.model.config.grammar());
  EXPECT_EQ(back.config.branch_losses, true);
  for (std::size_t i = 0; i < back.branches.size(); ++i) {
    EXPECT_EQ(back.branches[i].attend_source, r.model.branches[i].attend_source);
  }
  expect_same_report(evaluate(r.model, ds, SplitName::kTest, c),
                     evaluate(back, ds, SplitName::kTest, c));
  const BranchConfig expected = c.branch_config();
  EXPECT_NO_THROW(load_checkpoint(p, &expected));
}

TEST(Checkpoint, VisualOnlyRoundTrip) {
  const RunConfig c = small_config("");
  const FewShotDataset ds = load_run_dataset(c);
  TrainResult r = train(c, ds);
  TempDir dir;
  save_checkpoint(r.model, dir.path() / "v.ckpt");
  FusionModel back = load_checkpoint(dir.path() / "v.ckpt");
  EXPECT_TRUE(same_parameters(r.model, back));
  EXPECT_TRUE(back.branches.empty());
}

TEST(Checkpoint, MismatchedConfigRejected) {
  const RunConfig c = small_config("l/l");
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  TempDir dir;
  save_checkpoint(r.model, dir.path() / "m.ckpt");
  const BranchConfig other = parse_branch_config("l/l,d/v");
  EXPECT_THROW(load_checkpoint(dir.path() / "m.ckpt", &other), DataError);
  const BranchConfig losses = parse_branch_config("l/l", true);
  EXPECT_THROW(load_checkpoint(dir.path() / "m.ckpt", &losses), DataError);
}

TEST(Checkpoint, TruncatedAndCorruptFilesRejected) {
  const RunConfig c = small_config("l/l,d/v");
  const FewShotDataset ds = load_run_dataset(c);
  const TrainResult r = train(c, ds);
  TempDir dir;
  const fs::path p = dir.path() / "m.ckpt";
  save_checkpoint(r.model, p);
  std::string text;
  {
    std::ifstream in(p);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  for (const double frac : {0.0, 0.01, 0.3, 0.5, 0.9, 0.999}) {
    const fs::path cut = dir.path() / "cut.ckpt";
    std::ofstream(cut) << text.substr(0, static_cast<std::size_t>(frac * text.size()));
    EXPECT_THROW(load_checkpoint(cut), DataError) << frac;
  }
  std::string wrong_version = text;
  wrong_version.replace(0, 9, "FSLCKPT 9");
  std::ofstream(dir.path() / "v.ckpt") << wrong_version;
  EXPECT_THROW(load_checkpoint(dir.path() / "v.ckpt"), DataError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.ckpt"), DataError);
}

TEST(Config, ParseAndEcho) {
  const RunConfig c = parse_config(
      "# comment\n"
      "way = 5\nshot=5\nquery=15\nbranches=l/l,d/v\nbranch_losses=1\n"
      "train_episodes=100\neval_episodes=1000\nlr=0.0005\nseed=42\nembed_dim=64\n"
      "synth_classes=50\nsynth_modality=label:8:0.9\nsynth_modality=description:4:0.5\n");
  EXPECT_EQ(c.shot, 5);
  EXPECT_EQ(c.branches, "l/l,d/v");
  EXPECT_TRUE(c.branch_losses);
  EXPECT_EQ(c.adam.lr, 0.0005);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.embed_dim, 64);
  ASSERT_TRUE(c.synth.has_value());
  EXPECT_EQ(c.synth->modalities.size(), 2u);
  EXPECT_EQ(c.synth->modalities[1].informativeness, 0.5);
  const RunConfig again = parse_config(c.echo());
  EXPECT_EQ(again.echo(), c.echo());

  EXPECT_THROW(parse_config("colour=blue\n"), ConfigError);
  EXPECT_THROW(parse_config("way=five\n"), ConfigError);
  EXPECT_THROW(parse_config("way\n"), ConfigError);
  RunConfig bad = c;
  bad.way = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.features = "f.fslfeat";
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstBaseDir) {
  const RunConfig c = parse_config("features=f.fslfeat\nsemantics=l.fslsem\nsplit=/abs/s.fslsplit\n",
                                   "c.cfg", "/data/run");
  EXPECT_EQ(fs::path(c.features), fs::path("/data/run/f.fslfeat"));
  EXPECT_EQ(fs::path(c.semantics.at(0)), fs::path("/data/run/l.fslsem"));
  EXPECT_EQ(fs::path(c.split), fs::path("/abs/s.fslsplit"));
}

}  // namespace
}  // namespace protofuse
