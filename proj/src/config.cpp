#include "protofuse/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "protofuse/error.hpp"

namespace protofuse {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw ConfigError("config key '" + std::string(key) + "': invalid value '" +
                    std::string(value) + "' (expected " +
                    std::string(expected) + ")");
}

template <typename Int>
Int to_int(std::string_view key, std::string_view value) {
  Int v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    bad_value(key, value, "an integer");
  }
  return v;
}

double to_double(std::string_view key, std::string_view value) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v)) {
    bad_value(key, value, "a finite number");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") {
    return true;
  }
  if (value == "0" || value == "false" || value == "off" || value == "no") {
    return false;
  }
  bad_value(key, value, "0/1 or true/false");
}

SynthModality to_synth_modality(std::string_view key, std::string_view value) {
  // <name>:<dim>:<rho>
  const auto a = value.find(':');
  const auto b = a == std::string_view::npos ? a : value.find(':', a + 1);
  if (b == std::string_view::npos) {
    bad_value(key, value, "<modality>:<dim>:<informativeness>");
  }
  const auto m = parse_modality(value.substr(0, a));
  if (!m || *m == Modality::kVisual) {
    bad_value(key, value, "a label, description or attributes modality");
  }
  return {*m, to_int<Eigen::Index>(key, value.substr(a + 1, b - a - 1)),
          to_double(key, value.substr(b + 1))};
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  const auto synth_spec = [this]() -> SynthSpec& {
    if (!synth) {
      synth.emplace();
    }
    return *synth;
  };
  if (key == "way") {
    way = to_int<int>(key, value);
  } else if (key == "shot") {
    shot = to_int<int>(key, value);
  } else if (key == "query") {
    query = to_int<int>(key, value);
  } else if (key == "branches") {
    branches = std::string(value);
  } else if (key == "branch_losses") {
    branch_losses = to_bool(key, value);
  } else if (key == "train_episodes") {
    train_episodes = to_int<int>(key, value);
  } else if (key == "eval_episodes") {
    eval_episodes = to_int<int>(key, value);
  } else if (key == "eval_split") {
    parse_split_name(value);
    eval_split = std::string(value);
  } else if (key == "lr") {
    adam.lr = to_double(key, value);
  } else if (key == "adam_beta1") {
    adam.beta1 = to_double(key, value);
  } else if (key == "adam_beta2") {
    adam.beta2 = to_double(key, value);
  } else if (key == "adam_eps") {
    adam.eps = to_double(key, value);
  } else if (key == "seed") {
    seed = to_int<std::uint64_t>(key, value);
  } else if (key == "embed_dim") {
    embed_dim = to_int<Eigen::Index>(key, value);
  } else if (key == "visual_hidden") {
    visual_hidden = to_int<Eigen::Index>(key, value);
  } else if (key == "semantic_hidden") {
    semantic_hidden = to_int<Eigen::Index>(key, value);
  } else if (key == "attention_hidden") {
    attention_hidden = to_int<Eigen::Index>(key, value);
  } else if (key == "dropout") {
    dropout = to_double(key, value);
  } else if (key == "init_std") {
    init_std = to_double(key, value);
  } else if (key == "features") {
    features = std::string(value);
  } else if (key == "semantics") {
    semantics.emplace_back(value);
  } else if (key == "split") {
    split = std::string(value);
  } else if (key == "synth_classes") {
    synth_spec().n_classes = to_int<int>(key, value);
  } else if (key == "synth_instances") {
    synth_spec().instances_per_class = to_int<int>(key, value);
  } else if (key == "synth_dim") {
    synth_spec().feature_dim = to_int<Eigen::Index>(key, value);
  } else if (key == "synth_centroid_std") {
    synth_spec().centroid_std = to_double(key, value);
  } else if (key == "synth_noise_std") {
    synth_spec().instance_std = to_double(key, value);
  } else if (key == "synth_modality") {
    synth_spec().modalities.push_back(to_synth_modality(key, value));
  } else if (key == "synth_train") {
    synth_spec().train_classes = to_int<int>(key, value);
  } else if (key == "synth_val") {
    synth_spec().val_classes = to_int<int>(key, value);
  } else if (key == "synth_test") {
    synth_spec().test_classes = to_int<int>(key, value);
  } else if (key == "synth_seed") {
    synth_spec().seed = to_int<std::uint64_t>(key, value);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

void RunConfig::validate_run() const {
  if (way < 2) {
    throw ConfigError("config: way must be at least 2");
  }
  if (shot < 1) {
    throw ConfigError("config: shot must be at least 1");
  }
  if (query < 1) {
    throw ConfigError("config: query must be at least 1");
  }
  if (eval_episodes < 1) {
    throw ConfigError("config: eval_episodes must be at least 1");
  }
  if (train_episodes < 0) {
    throw ConfigError("config: train_episodes must be non-negative");
  }
  if (!(adam.lr > 0.0)) {
    throw ConfigError("config: lr must be positive");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 &&
        adam.beta2 < 1.0 && adam.eps > 0.0)) {
    throw ConfigError("config: Adam constants out of range");
  }
  if (embed_dim <= 0 || visual_hidden <= 0 || semantic_hidden <= 0 ||
      attention_hidden <= 0) {
    throw ConfigError("config: layer sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("config: dropout must lie in [0, 1)");
  }
  if (!(init_std >= 0.0)) {
    throw ConfigError("config: init_std must be non-negative");
  }
  branch_config();
}

void RunConfig::validate() const {
  validate_run();
  const bool has_files = !features.empty() || !semantics.empty() || !split.empty();
  if (has_files && synth) {
    throw ConfigError("config: give either dataset files or synth_* keys, not both");
  }
  if (!has_files && !synth) {
    throw ConfigError("config: no dataset (set features/semantics/split or synth_* keys)");
  }
  if (has_files && (features.empty() || split.empty())) {
    throw ConfigError("config: file datasets need both 'features' and 'split'");
  }
  if (synth) {
    synth->validate();
  }
}

BranchConfig RunConfig::branch_config() const {
  return parse_branch_config(branches, branch_losses);
}

ModelShape RunConfig::model_shape(const FewShotDataset& dataset) const {
  ModelShape shape;
  shape.visual_in_dim = dataset.features().dim();
  shape.visual_hidden = visual_hidden;
  shape.embed_dim = embed_dim;
  shape.semantic_hidden = semantic_hidden;
  shape.attention_hidden = attention_hidden;
  shape.dropout_rate = dropout;
  shape.init_std = init_std;
  shape.semantic_dims = dataset.semantic_dims();
  return shape;
}

std::string RunConfig::echo() const {
  std::ostringstream out;
  out << "way=" << way << '\n'
      << "shot=" << shot << '\n'
      << "query=" << query << '\n'
      << "branches=" << branches << '\n'
      << "branch_losses=" << (branch_losses ? 1 : 0) << '\n'
      << "train_episodes=" << train_episodes << '\n'
      << "eval_episodes=" << eval_episodes << '\n'
      << "eval_split=" << eval_split << '\n'
      << "lr=" << format_double(adam.lr) << '\n'
      << "adam_beta1=" << format_double(adam.beta1) << '\n'
      << "adam_beta2=" << format_double(adam.beta2) << '\n'
      << "adam_eps=" << format_double(adam.eps) << '\n'
      << "seed=" << seed << '\n'
      << "embed_dim=" << embed_dim << '\n'
      << "visual_hidden=" << visual_hidden << '\n'
      << "semantic_hidden=" << semantic_hidden << '\n'
      << "attention_hidden=" << attention_hidden << '\n'
      << "dropout=" << format_double(dropout) << '\n'
      << "init_std=" << format_double(init_std) << '\n';
  if (!features.empty()) {
    out << "features=" << features << '\n';
  }
  for (const auto& s : semantics) {
    out << "semantics=" << s << '\n';
  }
  if (!split.empty()) {
    out << "split=" << split << '\n';
  }
  if (synth) {
    out << "synth_classes=" << synth->n_classes << '\n'
        << "synth_instances=" << synth->instances_per_class << '\n'
        << "synth_dim=" << synth->feature_dim << '\n'
        << "synth_centroid_std=" << format_double(synth->centroid_std) << '\n'
        << "synth_noise_std=" << format_double(synth->instance_std) << '\n';
    for (const auto& m : synth->modalities) {
      out << "synth_modality=" << modality_name(m.modality) << ':' << m.dim
          << ':' << format_double(m.informativeness) << '\n';
    }
    out << "synth_train=" << synth->train_classes << '\n'
        << "synth_val=" << synth->val_classes << '\n'
        << "synth_test=" << synth->test_classes << '\n'
        << "synth_seed=" << synth->seed << '\n';
  }
  return out.str();
}

RunConfig parse_config(std::string_view text, std::string_view source,
                       const std::filesystem::path& base_dir) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    const auto raw = text.substr(start, end == std::string_view::npos
                                             ? std::string_view::npos
                                             : end - start);
    ++line_no;
    const auto line = trim(raw);
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError(std::string(source) + ":" + std::to_string(line_no) +
                          ": expected key=value");
      }
      try {
        config.set(line.substr(0, eq), line.substr(eq + 1));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string(source) + ":" + std::to_string(line_no) +
                          ": " + e.what());
      }
    }
    if (end == std::string_view::npos) {
      break;
    }
    start = end + 1;
  }
  if (!base_dir.empty()) {
    const auto resolve = [&base_dir](std::string& p) {
      if (!p.empty() && std::filesystem::path(p).is_relative()) {
        p = (base_dir / p).lexically_normal().string();
      }
    };
    resolve(config.features);
    resolve(config.split);
    for (auto& s : config.semantics) {
      resolve(s);
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError(path.string() + ": cannot open config file");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string(), path.parent_path());
}

FewShotDataset load_run_dataset(const RunConfig& config) {
  if (config.synth) {
    return generate_synthetic(*config.synth);
  }
  DatasetFiles files;
  files.features = config.features;
  files.split = config.split;
  for (const auto& s : config.semantics) {
    files.semantics.emplace_back(s);
  }
  return load_dataset(files);
}

void check_config_against_dataset(const RunConfig& config,
                                  const FewShotDataset& dataset) {
  config.validate_run();
  for (const Modality m : required_modalities(config.branch_config())) {
    if (!dataset.semantics().contains(m)) {
      throw ConfigError("config: branches '" + config.branches +
                        "' need modality '" + std::string(modality_name(m)) +
                        "' which the dataset does not provide");
    }
  }
}

}  // namespace protofuse
