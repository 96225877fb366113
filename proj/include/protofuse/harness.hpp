#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/config.hpp"
#include "protofuse/data.hpp"
#include "protofuse/fusion.hpp"

namespace protofuse {

/// Independent random streams of one training run.
struct TrainSeeds {
  std::uint64_t init = 0;
  std::uint64_t episodes = 0;
  std::uint64_t dropout = 0;

  static TrainSeeds for_run(std::uint64_t seed);
  /// Ablation cells share the episode stream of `base_seed` but draw their
  /// initialization and dropout from a seed derived from the cell label.
  static TrainSeeds for_cell(std::uint64_t base_seed, std::string_view label);
};

struct TrainResult {
  FusionModel model;
  std::vector<double> losses;  // one per training episode
};

/// Initializes a model for `config` and runs one Adam step per sampled
/// training episode. Configuration/dataset mismatches are reported before
/// any training happens.
TrainResult train(const RunConfig& config, const FewShotDataset& dataset,
                  std::optional<TrainSeeds> seeds = std::nullopt);

struct EvalReport {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // 1.96·s/√n over per-episode accuracies
  int episodes = 0;
  std::vector<double> episode_accuracies;
  /// Mean α over branches, classes and episodes; empty when k = 0.
  std::optional<double> mean_alpha;
  std::string protocol;  // "5-way 1-shot, 15 queries/class, split=test"
  std::string branches;
  bool branch_losses = false;
  double wall_seconds = 0.0;
};

/// 95% half-width 1.96·(sample std)/√n; zero for fewer than two values.
double ci95_half_width(std::span<const double> values);

/// Evaluates `config.eval_episodes` episodes of `split` in inference mode.
/// Episode i is sampled from a stream derived from (config.seed, i), so any
/// two models evaluated with the same seed see the same episodes.
EvalReport evaluate(const FusionModel& model, const FewShotDataset& dataset,
                    SplitName split, const RunConfig& config);

struct PairedDifference {
  double mean = 0.0;  // mean of (a − b) per episode
  double ci95 = 0.0;
};
/// Requires both reports to cover the same episodes.
PairedDifference paired_difference(const EvalReport& a, const EvalReport& b);

struct AblationCell {
  std::string label;
  std::string branches;
  bool branch_losses = false;
};

struct AblationRow {
  AblationCell cell;
  EvalReport report;
};

/// Grid file: one cell per line, `<label> <branches|-> <0|1>`; '-' stands for
/// the visual-only (empty) branch list; '#' starts a comment line.
std::vector<AblationCell> parse_grid(std::string_view text,
                                     std::string_view source = "grid");
std::vector<AblationCell> load_grid(const std::filesystem::path& path);

/// Validates every cell, then trains and evaluates one model per cell in grid
/// order. Cell seeds come from TrainSeeds::for_cell(base.seed, label).
std::vector<AblationRow> ablate(const RunConfig& base,
                                const FewShotDataset& dataset,
                                std::span<const AblationCell> grid);

/// `RESULT <tag> acc=<float> ci=<float> n=<int>`
std::string result_line(std::string_view tag, const EvalReport& report);

void save_checkpoint(const FusionModel& model, const std::filesystem::path& path);
/// Throws DataError on version/shape problems, truncation, or (when
/// `expected` is given) a branch configuration mismatch.
FusionModel load_checkpoint(const std::filesystem::path& path,
                            const BranchConfig* expected = nullptr);

}  // namespace protofuse
