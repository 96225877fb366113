#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

enum class OutputKind { kVector, kScalarSigmoid };
enum class Mode { kTrain, kInfer };

/// Two-layer perceptron: relu hidden layer, optional dropout between the
/// hidden and output layers, linear or sigmoid(scalar) output.
struct MlpParams {
  Mat64 w1;  // hidden × in
  Vec64 b1;  // hidden
  Mat64 w2;  // out × hidden
  Vec64 b2;  // out
  double dropout_rate = 0.0;
  OutputKind output_kind = OutputKind::kVector;

  Eigen::Index in_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index out_dim() const { return w2.rows(); }

  /// Throws ConfigError if the shape invariants do not hold.
  void validate() const;
};

/// Gradient storage with the same shapes as MlpParams.
struct MlpGrads {
  Mat64 w1;
  Vec64 b1;
  Mat64 w2;
  Vec64 b2;

  static MlpGrads zeros_like(const MlpParams& p);
  MlpGrads& operator+=(const MlpGrads& other);
};

std::vector<std::span<double>> tensor_views(MlpParams& p);
std::vector<std::span<double>> tensor_views(MlpGrads& g);

/// Weights ~ N(0, init_std²), biases exactly zero.
MlpParams init_mlp(Rng& rng, Eigen::Index in_dim, Eigen::Index hidden_dim,
                   Eigen::Index out_dim, double dropout_rate,
                   OutputKind output_kind, double init_std = 0.02);

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// 1/(1−rate).
Mat64 draw_dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                        double rate);

struct DropoutResult {
  Vec64 values;
  Vec64 mask;
};

/// Identity in infer mode (mask of ones, no RNG consumption).
DropoutResult dropout(Rng& rng, const Vec64& h, double rate, Mode mode);

/// Everything backward needs from a forward pass over a batch of row inputs.
struct ForwardCache {
  Mat64 input;       // n × in
  Mat64 pre_hidden;  // n × hidden, before relu
  Mat64 hidden;      // n × hidden, after relu and dropout
  Mat64 mask;        // n × hidden, all ones when dropout is off
  Mat64 output;      // n × out, after sigmoid for the scalar kind
};

/// Batched forward over the rows of `inputs`. A null mask means no dropout.
ForwardCache mlp_forward_batch(const MlpParams& p, const Mat64& inputs,
                               const Mat64* mask = nullptr);

struct MlpForward {
  Vec64 output;
  ForwardCache cache;
};

/// Single-input forward. Train mode draws a fresh dropout mask from `rng`;
/// infer mode leaves `rng` untouched.
MlpForward mlp_forward(const MlpParams& p, const Vec64& x, Mode mode, Rng& rng);

/// Deterministic inference on one input.
Vec64 mlp_infer(const MlpParams& p, const Vec64& x);

struct MlpBackward {
  MlpGrads grads;
  Mat64 grad_input;  // n × in
};

/// Exact gradients of the cached forward computation given dL/d(output).
/// For the sigmoid kind `grad_out` is the gradient w.r.t. the sigmoid value.
/// Throws ContractError if the cache or gradient does not match `p`.
MlpBackward mlp_backward(const MlpParams& p, const ForwardCache& cache,
                         const Mat64& grad_out);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Moment buffers are allocated on the first
/// call; later calls must present identically shaped tensors.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<double>> grads, OptState& state);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

/// Central differences over every entry of `params`, compared with `analytic`.
/// `loss` must read the parameters through the same storage and be
/// deterministic. Relative error uses the denominator max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(const std::function<double()>& loss,
                                  std::span<const std::span<double>> params,
                                  std::span<const std::span<double>> analytic,
                                  double step = 1e-6);

}  // namespace protofuse
