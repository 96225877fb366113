#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "protofuse/data.hpp"
#include "protofuse/fusion.hpp"
#include "protofuse/neural.hpp"

namespace protofuse {

/// Central-difference check of the full episode gradient with the dropout
/// masks of one training-mode draw frozen.
GradCheckResult check_episode_gradients(FusionModel& model,
                                        const Episode& episode,
                                        const DropoutMasks& masks,
                                        double step = 1e-6);

struct GradSuiteOptions {
  std::uint64_t seed = 1;
  int episodes_per_case = 1;
  std::vector<std::string> configs{"", "l/l", "l/l,d/v", "l/l,d/v,d/l"};
  std::vector<int> ways{2, 5};
  int shot = 1;
  int query = 2;
  double step = 1e-6;
};

struct GradCase {
  std::string branches;
  bool branch_losses = false;
  int way = 0;
  GradCheckResult worst;
};

/// Small synthetic dataset used by the gradient suite (two modalities).
FewShotDataset gradient_suite_dataset(std::uint64_t seed);
/// Small model dims so every parameter entry can be perturbed.
ModelShape gradient_suite_shape(const FewShotDataset& dataset);

/// Redraws every parameter, biases included, from N(0, std²). Zero biases
/// put ReLU units exactly on their kink whenever an upstream layer outputs 0.
void randomize_parameters(FusionModel& model, Rng& rng, double std);

/// Every (config, branch_losses on/off, way) combination.
std::vector<GradCase> run_gradient_suite(const GradSuiteOptions& options);

}  // namespace protofuse
