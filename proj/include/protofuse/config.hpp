#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/data.hpp"
#include "protofuse/fusion.hpp"
#include "protofuse/neural.hpp"

namespace protofuse {

/// Everything that determines a run. Loaded from a line-oriented key=value
/// file; command-line flags are applied on top through `set`.
struct RunConfig {
  int way = 5;
  int shot = 1;
  int query = 15;
  std::string branches;
  bool branch_losses = false;
  int train_episodes = 0;
  int eval_episodes = 1000;
  std::string eval_split = "test";
  AdamConfig adam;
  std::uint64_t seed = 1;

  Eigen::Index embed_dim = 512;
  Eigen::Index visual_hidden = 512;
  Eigen::Index semantic_hidden = 300;
  Eigen::Index attention_hidden = 300;
  double dropout = 0.7;
  double init_std = 0.02;

  std::string features;
  std::vector<std::string> semantics;
  std::string split;
  std::optional<SynthSpec> synth;

  /// Applies one key=value pair. Throws ConfigError on an unknown key or a
  /// malformed value.
  void set(std::string_view key, std::string_view value);

  /// Invariants: way >= 2, shot >= 1, eval_episodes >= 1, lr > 0, parseable
  /// branch grammar, and exactly one data source.
  void validate() const;
  /// Everything in `validate` except the data source, for callers that
  /// already hold a dataset.
  void validate_run() const;

  BranchConfig branch_config() const;
  ModelShape model_shape(const FewShotDataset& dataset) const;

  /// key=value lines that reproduce this config.
  std::string echo() const;
};

/// Parses key=value text. Relative dataset paths are resolved against
/// `base_dir`. `source` names the input in error messages.
RunConfig parse_config(std::string_view text, std::string_view source = "config",
                       const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Files named in the config, or the synthetic dataset it describes.
FewShotDataset load_run_dataset(const RunConfig& config);

/// Checks the branch config against the dataset's modalities.
void check_config_against_dataset(const RunConfig& config,
                                  const FewShotDataset& dataset);

}  // namespace protofuse
