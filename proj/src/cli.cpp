#include "protofuse/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protofuse/config.hpp"
#include "protofuse/error.hpp"
#include "protofuse/gradcheck.hpp"
#include "protofuse/harness.hpp"

namespace protofuse {
namespace {

constexpr double kGradTolerance = 1e-4;

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  std::string out;
};

// Flags that map 1:1 onto config keys, applied after the config file.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key,
            const std::string& help) {
    cmd->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { values.emplace_back(key, v); },
        help);
  }
};

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * x);
  return buf;
}

RunConfig resolve_config(const CommonArgs& common, const Overrides& overrides) {
  RunConfig config = common.config_path.empty() ? RunConfig{}
                                                : load_config(common.config_path);
  for (const auto& [key, value] : overrides.values) {
    config.set(key, value);
  }
  if (common.seed) {
    config.seed = *common.seed;
  }
  return config;
}

void print_report(std::ostream& out, std::string_view tag,
                  const EvalReport& report) {
  out << "protocol: " << report.protocol << '\n'
      << "branches: " << (report.branches.empty() ? "(visual only)" : report.branches)
      << " (branch losses " << (report.branch_losses ? "on" : "off") << ")\n"
      << "accuracy: " << percent(report.mean_accuracy) << " +- "
      << percent(report.ci95) << " (95% CI)\n";
  if (report.mean_alpha) {
    out << "mean alpha: " << format_double(*report.mean_alpha) << '\n';
  }
  out << result_line(tag, report) << '\n';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    throw EnvironmentError(path + ": cannot open for writing");
  }
  f << text;
  if (!f.flush()) {
    throw EnvironmentError(path + ": write failed");
  }
}

int cmd_gen_synth(const CommonArgs& common, const Overrides& overrides,
                  std::ostream& out) {
  RunConfig config = common.config_path.empty() ? RunConfig{}
                                                : load_config(common.config_path);
  if (!config.synth) {
    config.synth.emplace();
  }
  for (const auto& [key, value] : overrides.values) {
    config.set(key, value);
  }
  if (common.seed) {
    config.synth->seed = *common.seed;
  }
  if (common.out.empty()) {
    throw ConfigError("gen-synth: --out <dir> is required");
  }
  const FewShotDataset dataset = generate_synthetic(*config.synth);
  const std::filesystem::path dir(common.out);
  const DatasetFiles files = write_dataset(dataset, dir);

  std::string cfg = "features=" + files.features.filename().string() + "\n";
  for (const auto& s : files.semantics) {
    cfg += "semantics=" + s.filename().string() + "\n";
  }
  cfg += "split=" + files.split.filename().string() + "\n";
  write_text((dir / "dataset.cfg").string(), cfg);

  out << "generated " << config.synth->n_classes << " classes x "
      << config.synth->instances_per_class << " instances (dim "
      << config.synth->feature_dim << ") into " << dir.string() << '\n'
      << "split: " << dataset.split().train.size() << " train / "
      << dataset.split().val.size() << " val / " << dataset.split().test.size()
      << " test\n";
  for (const auto& m : config.synth->modalities) {
    out << "modality " << modality_name(m.modality) << ": dim " << m.dim
        << ", informativeness " << format_double(m.informativeness) << '\n';
  }
  out << "dataset config: " << (dir / "dataset.cfg").string() << '\n';
  return kExitOk;
}

int cmd_train(const CommonArgs& common, const Overrides& overrides,
              std::ostream& out) {
  RunConfig config = resolve_config(common, overrides);
  if (common.episodes) {
    config.train_episodes = *common.episodes;
  }
  const FewShotDataset dataset = load_run_dataset(config);
  const TrainResult result = train(config, dataset);
  const std::string path = common.out.empty() ? "model.ckpt" : common.out;
  save_checkpoint(result.model, path);

  const auto n = result.losses.size();
  out << "trained " << n << " episodes (" << config.way << "-way "
      << config.shot << "-shot), branches '" << config.branches
      << "', branch losses " << (config.branch_losses ? "on" : "off") << '\n'
      << "parameters: " << result.model.parameter_count() << '\n';
  if (n > 0) {
    const std::size_t tenth = std::max<std::size_t>(1, n / 10);
    double first = 0.0;
    double last = 0.0;
    for (std::size_t i = 0; i < tenth; ++i) {
      first += result.losses[i];
      last += result.losses[n - 1 - i];
    }
    out << "mean loss: first 10% " << format_double(first / tenth)
        << ", last 10% " << format_double(last / tenth) << '\n';
  }
  out << "checkpoint: " << path << '\n';
  return kExitOk;
}

int cmd_eval(const CommonArgs& common, const Overrides& overrides,
             const std::string& checkpoint, std::ostream& out) {
  RunConfig config = resolve_config(common, overrides);
  if (common.episodes) {
    config.eval_episodes = *common.episodes;
  }
  config.validate();
  const FewShotDataset dataset = load_run_dataset(config);
  const BranchConfig expected = config.branch_config();
  const FusionModel model = load_checkpoint(checkpoint, &expected);
  const EvalReport report =
      evaluate(model, dataset, parse_split_name(config.eval_split), config);
  print_report(out, "eval", report);
  if (!common.out.empty()) {
    write_text(common.out, result_line("eval", report) + "\n");
  }
  return kExitOk;
}

int cmd_ablate(const CommonArgs& common, const Overrides& overrides,
               const std::string& grid_path, std::ostream& out) {
  RunConfig config = resolve_config(common, overrides);
  if (common.episodes) {
    config.eval_episodes = *common.episodes;
  }
  const FewShotDataset dataset = load_run_dataset(config);
  const auto grid = load_grid(grid_path);
  const auto rows = ablate(config, dataset, grid);

  std::ostringstream table;
  table << "label\tbranches\tbranch_losses\tacc\tci\tn\n";
  for (const auto& row : rows) {
    table << row.cell.label << '\t'
          << (row.cell.branches.empty() ? "-" : row.cell.branches) << '\t'
          << (row.cell.branch_losses ? 1 : 0) << '\t'
          << format_double(row.report.mean_accuracy) << '\t'
          << format_double(row.report.ci95) << '\t' << row.report.episodes
          << '\n';
  }
  out << "ablation: " << rows.size() << " cells, "
      << (rows.empty() ? std::string("no cells") : rows.front().report.protocol)
      << '\n'
      << table.str();
  for (const auto& row : rows) {
    out << result_line(row.cell.label, row.report) << '\n';
  }
  if (!common.out.empty()) {
    write_text(common.out, table.str());
  }
  return kExitOk;
}

int cmd_check_grad(const CommonArgs& common, std::ostream& out) {
  GradSuiteOptions options;
  if (common.seed) {
    options.seed = *common.seed;
  }
  if (common.episodes) {
    if (*common.episodes < 1) {
      throw ConfigError("check-grad: --episodes must be at least 1");
    }
    options.episodes_per_case = *common.episodes;
  }
  const auto cases = run_gradient_suite(options);
  std::ostringstream report;
  double worst = 0.0;
  for (const auto& c : cases) {
    worst = std::max(worst, c.worst.max_rel_error);
    report << "config '" << c.branches << "' branch_losses="
           << (c.branch_losses ? 1 : 0) << " way=" << c.way
           << " entries=" << c.worst.entries_checked
           << " max_rel_error=" << format_double(c.worst.max_rel_error)
           << " at tensor " << c.worst.worst_tensor << "[" << c.worst.worst_index
           << "] analytic=" << format_double(c.worst.worst_analytic)
           << " numeric=" << format_double(c.worst.worst_numeric) << '\n';
  }
  report << "worst relative error: " << format_double(worst) << " (tolerance "
         << format_double(kGradTolerance) << ")\n"
         << "GRADCHECK " << (worst < kGradTolerance ? "PASS" : "FAIL")
         << " max_rel_error=" << format_double(worst) << '\n';
  out << report.str();
  if (!common.out.empty()) {
    write_text(common.out, report.str());
  }
  return worst < kGradTolerance ? kExitOk : kExitFailure;
}

void add_common(CLI::App* cmd, CommonArgs& common) {
  cmd->add_option("--config", common.config_path, "key=value run configuration file");
  cmd->add_option("--seed", common.seed, "base random seed");
  cmd->add_option("--episodes", common.episodes,
                  "episode count (train: training episodes; eval/ablate: "
                  "evaluation episodes; check-grad: episodes per case; "
                  "unused by gen-synth)");
  cmd->add_option("--out", common.out, "output path");
}

void add_run_overrides(CLI::App* cmd, Overrides& o) {
  o.bind(cmd, "--way", "way", "classes per episode");
  o.bind(cmd, "--shot", "shot", "support examples per class");
  o.bind(cmd, "--query", "query", "queries per class");
  o.bind(cmd, "--branches", "branches", "branch grammar, e.g. l/l,d/v");
  o.bind(cmd, "--branch-losses", "branch_losses", "0 or 1");
  o.bind(cmd, "--lr", "lr", "Adam learning rate");
  o.bind(cmd, "--embed-dim", "embed_dim", "prototype dimension");
  o.bind(cmd, "--split", "eval_split", "evaluation split (train, val, test)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Few-shot classification with multi-semantic prototype fusion",
               "protofuse"};
  app.require_subcommand(1);

  CommonArgs common;
  Overrides overrides;
  std::string checkpoint;
  std::string grid;

  auto* gen = app.add_subcommand("gen-synth", "write a synthetic dataset");
  add_common(gen, common);
  overrides.bind(gen, "--classes", "synth_classes", "number of classes");
  overrides.bind(gen, "--instances", "synth_instances", "instances per class");
  overrides.bind(gen, "--dim", "synth_dim", "visual feature dimension");
  overrides.bind(gen, "--centroid-std", "synth_centroid_std", "class centroid std");
  overrides.bind(gen, "--noise-std", "synth_noise_std", "instance noise std");
  gen->add_option_function<std::vector<std::string>>(
      "--modality",
      [&overrides](const std::vector<std::string>& specs) {
        for (const auto& spec : specs) {
          overrides.values.emplace_back("synth_modality", spec);
        }
      },
      "<name>:<dim>:<informativeness>, repeatable");
  overrides.bind(gen, "--train", "synth_train", "training classes");
  overrides.bind(gen, "--val", "synth_val", "validation classes");
  overrides.bind(gen, "--test", "synth_test", "test classes");

  auto* train_cmd = app.add_subcommand("train", "meta-train a model");
  add_common(train_cmd, common);
  add_run_overrides(train_cmd, overrides);

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, common);
  add_run_overrides(eval_cmd, overrides);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint to evaluate")
      ->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "train and evaluate a grid");
  add_common(ablate_cmd, common);
  add_run_overrides(ablate_cmd, overrides);
  overrides.bind(ablate_cmd, "--train-episodes", "train_episodes",
                 "training episodes per cell");
  ablate_cmd->add_option("--grid", grid, "grid file")->required();

  auto* grad_cmd = app.add_subcommand("check-grad", "finite-difference gradient suite");
  add_common(grad_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_synth(common, overrides, out);
    }
    if (train_cmd->parsed()) {
      return cmd_train(common, overrides, out);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval(common, overrides, checkpoint, out);
    }
    if (ablate_cmd->parsed()) {
      return cmd_ablate(common, overrides, grid, out);
    }
    return cmd_check_grad(common, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EnvironmentError& e) {
    err << "environment error: " << e.what() << '\n';
    return kExitEnvironment;
  } catch (const ContractError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitContract;
  }
}

}  // namespace protofuse
