#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "protofuse/episode.hpp"
#include "protofuse/neural.hpp"
#include "protofuse/numeric.hpp"

namespace protofuse {

/// One "x/y" cell: the branch turns `input` into a semantic prototype and
/// computes its attention coefficient from the prototype of `attend`.
struct BranchSpec {
  Modality input = Modality::kLabel;
  Modality attend = Modality::kLabel;

  bool operator==(const BranchSpec&) const = default;
};

struct BranchConfig {
  std::vector<BranchSpec> branches;
  bool branch_losses = false;

  /// Canonical grammar string, e.g. "l/l,d/v". Empty for visual-only.
  std::string grammar() const;
  bool operator==(const BranchConfig&) const = default;
};

/// Parses comma-separated "x/y" tokens with x, y in {l, d, a, v}. The empty
/// string is the visual-only configuration. Errors name the token position.
BranchConfig parse_branch_config(std::string_view text,
                                 bool branch_losses = false);

/// Attend source per branch: -1 for the visual prototype, otherwise the index
/// of the earliest branch (up to and including this one) whose input is the
/// attend modality. Throws ConfigError when a source cannot be resolved.
std::vector<int> resolve_attend_sources(const BranchConfig& config);

/// Semantic modalities referenced as branch inputs.
std::vector<Modality> required_modalities(const BranchConfig& config);

struct ModelShape {
  Eigen::Index visual_in_dim = 0;
  Eigen::Index visual_hidden = 512;
  Eigen::Index embed_dim = 512;
  Eigen::Index semantic_hidden = 300;
  Eigen::Index attention_hidden = 300;
  double dropout_rate = 0.7;
  double init_std = 0.02;
  std::map<Modality, Eigen::Index> semantic_dims;
};

struct FusionBranch {
  BranchSpec spec;
  int attend_source = -1;
  std::optional<MlpParams> semantic;  // absent for visual-input branches
  MlpParams attention;
};

struct FusionModel {
  BranchConfig config;
  MlpParams visual_head;
  std::vector<FusionBranch> branches;

  Eigen::Index embed_dim() const { return visual_head.out_dim(); }
  Eigen::Index visual_in_dim() const { return visual_head.in_dim(); }

  /// Every trainable tensor in a fixed order: visual head, then per branch
  /// the semantic MLP (if any) and the attention MLP.
  std::vector<std::span<double>> parameter_views();
  std::size_t parameter_count() const;

  /// Throws ConfigError if the model's own structure is inconsistent.
  void validate() const;
};

FusionModel init_fusion_model(Rng& rng, const BranchConfig& config,
                              const ModelShape& shape);

struct FusionGrads {
  MlpGrads visual_head;
  std::vector<std::optional<MlpGrads>> semantic;
  std::vector<MlpGrads> attention;

  static FusionGrads zeros_like(const FusionModel& model);
  /// Same ordering as FusionModel::parameter_views.
  std::vector<std::span<double>> views();
};

/// Raw feature rows through the visual head in inference mode.
Mat64 embed_visual(const FusionModel& model, const Mat64& raw_features);

/// Mean of the embedded support rows. Throws ContractError when empty.
Vec64 visual_prototype(const Mat64& embedded_support);

/// Per-class inputs to a branch.
struct ClassContext {
  Vec64 visual_prototype;
  std::map<Modality, Vec64> semantics;
};

/// Inference-mode semantic prototype. Visual-input branches return V itself.
/// Throws DataError if the class lacks the branch's input modality.
Vec64 semantic_prototype(const FusionModel& model, std::size_t branch,
                         const ClassContext& context);

/// Inference-mode α for one class.
double attention_coefficient(const FusionModel& model, std::size_t branch,
                             const Vec64& attend_prototype);

/// P_0 = V, P_r = α_r·P_{r−1} + (1−α_r)·S_r. Returns P_0..P_k.
std::vector<Vec64> fuse_cascade(const Vec64& visual,
                                std::span<const std::pair<Vec64, double>> stages);

/// P = V·∏α_i + Σ S_i·(1−α_i)·∏_{j>i} α_j.
Vec64 fuse_closed_form(const Vec64& visual, std::span<const Vec64> semantic,
                       std::span<const double> alphas);

/// softmax over −‖Q − P_c‖². Throws ConfigError with fewer than two classes.
Vec64 class_probabilities(const Vec64& query, std::span<const Vec64> prototypes);

/// Dropout masks for one episode. Empty optionals mean "no dropout".
struct DropoutMasks {
  std::optional<Mat64> visual;
  std::vector<std::optional<Mat64>> semantic;
  std::vector<std::optional<Mat64>> attention;
};

DropoutMasks draw_dropout_masks(const FusionModel& model,
                                const Episode& episode, Rng& rng);

/// All intermediate quantities of one episode forward pass.
struct EpisodeForward {
  ForwardCache visual_cache;
  Mat64 visual_prototypes;                 // way × E
  Mat64 query_embeddings;                  // n_query × E
  std::vector<Mat64> semantic_prototypes;  // per branch, way × E
  std::vector<std::optional<ForwardCache>> semantic_caches;
  std::vector<Vec64> alphas;  // per branch, way
  std::vector<ForwardCache> attention_caches;
  std::vector<Mat64> partial_prototypes;  // P_0..P_k, each way × E
};

/// Throws ConfigError/DataError if the episode does not fit the model.
void check_episode(const FusionModel& model, const Episode& episode);

/// Forward pass with the given masks (nullptr: inference, no dropout).
EpisodeForward forward_episode(const FusionModel& model, const Episode& episode,
                               const DropoutMasks* masks = nullptr);

/// Indices r of the active loss terms: 0..k with branch losses, else only k.
std::vector<std::size_t> active_loss_terms(const BranchConfig& config);

/// Mean over queries of Σ_r −log prob_r(Q, true class).
double episode_loss(const FusionModel& model, const Episode& episode,
                    const DropoutMasks* masks = nullptr);
double episode_loss(const FusionModel& model, const Episode& episode, Mode mode,
                    Rng& rng);

struct LossAndGrads {
  double loss = 0.0;
  FusionGrads grads;
};

LossAndGrads episode_loss_and_grads(const FusionModel& model,
                                    const Episode& episode,
                                    const DropoutMasks& masks);
/// Train-mode loss and gradients; masks are drawn once from `rng`.
LossAndGrads episode_loss_and_grads(const FusionModel& model,
                                    const Episode& episode, Rng& rng);

/// Argmax of class probabilities against the final prototypes, inference
/// mode. Ties go to the lowest class index.
std::vector<int> predict(const FusionModel& model, const Episode& episode);
/// Same decision rule applied to an existing forward pass.
std::vector<int> predict_from_forward(const EpisodeForward& forward);

}  // namespace protofuse
