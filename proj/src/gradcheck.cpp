#include "protofuse/gradcheck.hpp"

namespace protofuse {

GradCheckResult check_episode_gradients(FusionModel& model,
                                        const Episode& episode,
                                        const DropoutMasks& masks,
                                        double step) {
  LossAndGrads analytic = episode_loss_and_grads(model, episode, masks);
  const auto loss = [&] { return episode_loss(model, episode, &masks); };
  return finite_diff_check(loss, model.parameter_views(),
                           analytic.grads.views(), step);
}

void randomize_parameters(FusionModel& model, Rng& rng, double std) {
  for (const auto view : model.parameter_views()) {
    for (double& v : view) {
      v = std * rng.normal();
    }
  }
}

FewShotDataset gradient_suite_dataset(std::uint64_t seed) {
  SynthSpec spec;
  spec.n_classes = 12;
  spec.instances_per_class = 6;
  spec.feature_dim = 6;
  spec.centroid_std = 1.0;
  spec.instance_std = 0.5;
  spec.modalities = {{Modality::kLabel, 5, 0.8}, {Modality::kDescription, 4, 0.6}};
  spec.train_classes = 12;
  spec.seed = seed;
  return generate_synthetic(spec);
}

ModelShape gradient_suite_shape(const FewShotDataset& dataset) {
  ModelShape shape;
  shape.visual_in_dim = dataset.features().dim();
  shape.visual_hidden = 16;
  shape.embed_dim = 10;
  shape.semantic_hidden = 24;
  shape.attention_hidden = 24;
  shape.dropout_rate = 0.7;
  shape.init_std = 0.3;
  shape.semantic_dims = dataset.semantic_dims();
  return shape;
}

std::vector<GradCase> run_gradient_suite(const GradSuiteOptions& options) {
  const FewShotDataset dataset = gradient_suite_dataset(options.seed);
  const ModelShape shape = gradient_suite_shape(dataset);
  std::vector<GradCase> cases;
  for (const auto& grammar : options.configs) {
    for (const bool losses : {true, false}) {
      for (const int way : options.ways) {
        GradCase result{grammar, losses, way, {}};
        const std::string tag = grammar + "|" + (losses ? "1" : "0") + "|" +
                                std::to_string(way);
        Rng rng(derive_seed(options.seed, tag));
        for (int e = 0; e < options.episodes_per_case; ++e) {
          FusionModel model =
              init_fusion_model(rng, parse_branch_config(grammar, losses), shape);
          randomize_parameters(model, rng, shape.init_std);
          const Episode ep = sample_episode(rng, dataset, SplitName::kTrain, way,
                                            options.shot, options.query);
          const DropoutMasks masks = draw_dropout_masks(model, ep, rng);
          const GradCheckResult r =
              check_episode_gradients(model, ep, masks, options.step);
          const std::size_t checked = result.worst.entries_checked + r.entries_checked;
          if (r.max_rel_error >= result.worst.max_rel_error) {
            result.worst = r;
          }
          result.worst.entries_checked = checked;
        }
        cases.push_back(std::move(result));
      }
    }
  }
  return cases;
}

}  // namespace protofuse
