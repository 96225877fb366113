#include "protofuse/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "protofuse/error.hpp"

namespace protofuse {

TrainSeeds TrainSeeds::for_run(std::uint64_t seed) {
  return {derive_seed(seed, "init"), derive_seed(seed, "train-episodes"),
          derive_seed(seed, "dropout")};
}

TrainSeeds TrainSeeds::for_cell(std::uint64_t base_seed, std::string_view label) {
  const std::uint64_t cell = derive_seed(base_seed, "cell:" + std::string(label));
  return {derive_seed(cell, "init"), derive_seed(base_seed, "train-episodes"),
          derive_seed(cell, "dropout")};
}

TrainResult train(const RunConfig& config, const FewShotDataset& dataset,
                  std::optional<TrainSeeds> seeds) {
  check_config_against_dataset(config, dataset);
  const TrainSeeds s = seeds.value_or(TrainSeeds::for_run(config.seed));
  if (config.train_episodes > 0 &&
      dataset.split().train.size() < static_cast<std::size_t>(config.way)) {
    throw ConfigError("train: training split has " +
                      std::to_string(dataset.split().train.size()) +
                      " classes, fewer than way=" + std::to_string(config.way));
  }

  Rng init_rng(s.init);
  TrainResult result{
      init_fusion_model(init_rng, config.branch_config(),
                        config.model_shape(dataset)),
      {}};
  result.losses.reserve(static_cast<std::size_t>(config.train_episodes));

  Rng episode_rng(s.episodes);
  Rng dropout_rng(s.dropout);
  OptState opt;
  opt.config = config.adam;
  auto params = result.model.parameter_views();
  for (int step = 0; step < config.train_episodes; ++step) {
    const Episode ep = sample_episode(episode_rng, dataset, SplitName::kTrain,
                                      config.way, config.shot, config.query);
    LossAndGrads lg = episode_loss_and_grads(result.model, ep, dropout_rng);
    result.losses.push_back(lg.loss);
    adam_step(params, lg.grads.views(), opt);
  }
  return result;
}

double ci95_half_width(std::span<const double> values) {
  const auto n = values.size();
  if (n < 2) {
    return 0.0;
  }
  double mean = 0.0;
  for (const double v : values) {
    mean += v;
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (const double v : values) {
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

EvalReport evaluate(const FusionModel& model, const FewShotDataset& dataset,
                    SplitName split, const RunConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  if (config.eval_episodes < 1) {
    throw ConfigError("evaluate: eval_episodes must be at least 1");
  }
  EvalReport report;
  report.episodes = config.eval_episodes;
  report.branches = model.config.grammar();
  report.branch_losses = model.config.branch_losses;
  report.protocol = std::to_string(config.way) + "-way " +
                    std::to_string(config.shot) + "-shot, " +
                    std::to_string(config.query) + " queries/class, " +
                    std::to_string(config.eval_episodes) +
                    " episodes, split=" + std::string(split_name(split));

  const std::uint64_t eval_seed = derive_seed(config.seed, "eval");
  double alpha_sum = 0.0;
  std::size_t alpha_count = 0;
  double acc_sum = 0.0;
  for (int i = 0; i < config.eval_episodes; ++i) {
    Rng rng(derive_seed(eval_seed, static_cast<std::uint64_t>(i)));
    const Episode ep = sample_episode(rng, dataset, split, config.way,
                                      config.shot, config.query);
    const EpisodeForward fwd = forward_episode(model, ep, nullptr);
    const auto labels = predict_from_forward(fwd);
    int correct = 0;
    for (std::size_t q = 0; q < labels.size(); ++q) {
      correct += labels[q] == ep.query_labels[q] ? 1 : 0;
    }
    const double acc = static_cast<double>(correct) /
                       static_cast<double>(labels.size());
    report.episode_accuracies.push_back(acc);
    acc_sum += acc;
    for (const Vec64& a : fwd.alphas) {
      alpha_sum += a.sum();
      alpha_count += static_cast<std::size_t>(a.size());
    }
  }
  report.mean_accuracy = acc_sum / static_cast<double>(config.eval_episodes);
  report.ci95 = ci95_half_width(report.episode_accuracies);
  if (alpha_count > 0) {
    report.mean_alpha = alpha_sum / static_cast<double>(alpha_count);
  }
  report.wall_seconds = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - start)
                            .count();
  return report;
}

PairedDifference paired_difference(const EvalReport& a, const EvalReport& b) {
  if (a.episode_accuracies.size() != b.episode_accuracies.size() ||
      a.episode_accuracies.empty()) {
    throw ContractError("paired_difference: reports cover different episodes");
  }
  std::vector<double> diff(a.episode_accuracies.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) {
    diff[i] = a.episode_accuracies[i] - b.episode_accuracies[i];
    sum += diff[i];
  }
  return {sum / static_cast<double>(diff.size()), ci95_half_width(diff)};
}

std::vector<AblationCell> parse_grid(std::string_view text,
                                     std::string_view source) {
  std::vector<AblationCell> cells;
  std::set<std::string> labels;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    std::istringstream fields(line);
    AblationCell cell;
    std::string branches;
    std::string losses;
    std::string extra;
    if (!(fields >> cell.label >> branches >> losses) || (fields >> extra)) {
      throw ConfigError(where + "expected '<label> <branches|-> <0|1>'");
    }
    cell.branches = branches == "-" ? "" : branches;
    if (losses == "1") {
      cell.branch_losses = true;
    } else if (losses != "0") {
      throw ConfigError(where + "branch-losses flag must be 0 or 1");
    }
    if (!labels.insert(cell.label).second) {
      throw ConfigError(where + "duplicate cell label '" + cell.label + "'");
    }
    try {
      parse_branch_config(cell.branches, cell.branch_losses);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

std::vector<AblationCell> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path.string() + ": cannot open grid file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_grid(buf.str(), path.string());
}

std::vector<AblationRow> ablate(const RunConfig& base,
                                const FewShotDataset& dataset,
                                std::span<const AblationCell> grid) {
  std::vector<RunConfig> configs;
  for (const auto& cell : grid) {
    RunConfig c = base;
    c.branches = cell.branches;
    c.branch_losses = cell.branch_losses;
    try {
      check_config_against_dataset(c, dataset);
    } catch (const ConfigError& e) {
      throw ConfigError("ablation cell '" + cell.label + "': " + e.what());
    }
    configs.push_back(std::move(c));
  }
  const SplitName split = parse_split_name(base.eval_split);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const TrainResult trained =
        train(configs[i], dataset, TrainSeeds::for_cell(base.seed, grid[i].label));
    rows.push_back({grid[i], evaluate(trained.model, dataset, split, configs[i])});
  }
  return rows;
}

std::string result_line(std::string_view tag, const EvalReport& report) {
  return "RESULT " + std::string(tag) +
         " acc=" + format_double(report.mean_accuracy) +
         " ci=" + format_double(report.ci95) +
         " n=" + std::to_string(report.episodes);
}

}  // namespace protofuse
