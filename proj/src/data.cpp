#include "protofuse/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "protofuse/error.hpp"

namespace protofuse {
namespace {

// Yields the non-comment, non-blank lines of a text file with line numbers.
class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path)
      : path_(path), in_(path) {
    if (!in_) {
      throw DataError(path_.string() + ": cannot open file");
    }
  }

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      if (!line.empty() && line.back() == '\r') {
        line.pop_back();
      }
      const auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos || line[first] == '#') {
        continue;
      }
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ":" + std::to_string(number_) + ": " +
                    what);
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t number_ = 0;
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
      ++i;
    }
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') {
      ++i;
    }
    if (i > start) {
      out.push_back(line.substr(start, i - start));
    }
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<long long> parse_int(std::string_view s) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    return std::nullopt;
  }
  return v;
}

void expect_header(LineReader& reader, std::string_view magic) {
  std::string line;
  if (!reader.next(line)) {
    reader.fail("empty file, expected '" + std::string(magic) + " 1'");
  }
  const auto tokens = split_ws(line);
  if (tokens.size() != 2 || tokens[0] != magic) {
    reader.fail("expected header '" + std::string(magic) + " 1'");
  }
  if (tokens[1] != "1") {
    reader.fail("unsupported " + std::string(magic) + " version '" +
                std::string(tokens[1]) + "'");
  }
}

Eigen::Index expect_dims(LineReader& reader) {
  std::string line;
  if (!reader.next(line)) {
    reader.fail("missing 'dims <D>' line");
  }
  const auto tokens = split_ws(line);
  if (tokens.size() != 2 || tokens[0] != "dims") {
    reader.fail("expected 'dims <D>'");
  }
  const auto d = parse_int(tokens[1]);
  if (!d || *d <= 0) {
    reader.fail("dimension must be a positive integer");
  }
  return static_cast<Eigen::Index>(*d);
}

Vec64 parse_vector(LineReader& reader, std::span<const std::string_view> tokens,
                   Eigen::Index dim) {
  if (static_cast<Eigen::Index>(tokens.size()) != dim) {
    reader.fail("expected " + std::to_string(dim) + " values, found " +
                std::to_string(tokens.size()));
  }
  Vec64 v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    const auto x = parse_double(tokens[static_cast<std::size_t>(i)]);
    if (!x) {
      reader.fail("invalid number '" +
                  std::string(tokens[static_cast<std::size_t>(i)]) + "'");
    }
    v[i] = *x;
  }
  return v;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw EnvironmentError(path.string() + ": cannot open for writing");
  }
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) {
    throw EnvironmentError(path.string() + ": write failed");
  }
}

void append_vector(std::string& line, const Vec64& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    line += ' ';
    line += format_double(v[i]);
  }
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) {
    throw ContractError("format_double: conversion failed");
  }
  return std::string(buf, ptr);
}

const ClassInstances& FeatureTable::at(const std::string& class_id) const {
  const auto it = index_.find(class_id);
  if (it == index_.end()) {
    throw DataError("unknown class '" + class_id + "'");
  }
  return classes_[it->second];
}

void FeatureTable::add(const std::string& class_id, Instance instance) {
  if (instance.features.size() != dim_) {
    throw DataError("feature vector of dim " +
                    std::to_string(instance.features.size()) +
                    " in a table of dim " + std::to_string(dim_));
  }
  auto [it, inserted] = index_.try_emplace(class_id, classes_.size());
  if (inserted) {
    classes_.push_back({class_id, {}});
  }
  auto& bucket = classes_[it->second].instances;
  for (const auto& existing : bucket) {
    if (existing.item_id == instance.item_id) {
      throw DataError("duplicate instance (" + class_id + ", " +
                      instance.item_id + ")");
    }
  }
  bucket.push_back(std::move(instance));
}

std::string_view split_name(SplitName s) {
  switch (s) {
    case SplitName::kTrain: return "train";
    case SplitName::kVal: return "val";
    case SplitName::kTest: return "test";
  }
  return "?";
}

SplitName parse_split_name(std::string_view text) {
  if (text == "train") return SplitName::kTrain;
  if (text == "val") return SplitName::kVal;
  if (text == "test") return SplitName::kTest;
  throw ConfigError("unknown split '" + std::string(text) +
                    "' (expected train, val or test)");
}

const std::vector<std::string>& ClassSplit::get(SplitName s) const {
  switch (s) {
    case SplitName::kTrain: return train;
    case SplitName::kVal: return val;
    case SplitName::kTest: return test;
  }
  return test;
}

FewShotDataset FewShotDataset::assemble(FeatureTable features,
                                        std::vector<SemanticTable> semantics,
                                        ClassSplit split) {
  std::set<std::string> seen;
  for (const SplitName s : {SplitName::kTrain, SplitName::kVal, SplitName::kTest}) {
    for (const auto& id : split.get(s)) {
      if (!seen.insert(id).second) {
        throw DataError("split: class '" + id + "' listed more than once");
      }
      if (!features.contains(id)) {
        throw DataError("split: class '" + id + "' (" +
                        std::string(split_name(s)) + ") has no features");
      }
    }
  }
  FewShotDataset ds;
  for (auto& table : semantics) {
    if (table.modality == Modality::kVisual) {
      throw DataError("semantics: 'visual' is not a semantic modality");
    }
    for (const auto& [id, v] : table.vectors) {
      if (v.size() != table.dim) {
        throw DataError("semantics '" +
                        std::string(modality_name(table.modality)) +
                        "': class '" + id + "' has dim " +
                        std::to_string(v.size()));
      }
    }
    for (const auto& cls : features.classes()) {
      if (!table.vectors.contains(cls.class_id)) {
        throw DataError("semantics '" +
                        std::string(modality_name(table.modality)) +
                        "' has no vector for class '" + cls.class_id + "'");
      }
    }
    const Modality m = table.modality;
    if (!ds.semantics_.emplace(m, std::move(table)).second) {
      throw DataError("semantics: modality '" +
                      std::string(modality_name(m)) + "' given twice");
    }
  }
  ds.features_ = std::move(features);
  ds.split_ = std::move(split);
  return ds;
}

std::map<Modality, Eigen::Index> FewShotDataset::semantic_dims() const {
  std::map<Modality, Eigen::Index> dims;
  for (const auto& [m, table] : semantics_) {
    dims[m] = table.dim;
  }
  return dims;
}

FeatureTable load_features(const std::filesystem::path& path) {
  LineReader reader(path);
  expect_header(reader, "FSLFEAT");
  FeatureTable table(expect_dims(reader));
  std::string line;
  while (reader.next(line)) {
    const auto tokens = split_ws(line);
    if (tokens.size() < 2) {
      reader.fail("expected '<class_id> <item_id> <values...>'");
    }
    Vec64 v = parse_vector(reader, std::span(tokens).subspan(2), table.dim());
    try {
      table.add(std::string(tokens[0]), {std::string(tokens[1]), std::move(v)});
    } catch (const DataError& e) {
      reader.fail(e.what());
    }
  }
  return table;
}

SemanticTable load_semantics(const std::filesystem::path& path) {
  LineReader reader(path);
  expect_header(reader, "FSLSEM");
  SemanticTable table;
  std::string line;
  if (!reader.next(line)) {
    reader.fail("missing 'modality <name>' line");
  }
  const auto mod_tokens = split_ws(line);
  if (mod_tokens.size() != 2 || mod_tokens[0] != "modality") {
    reader.fail("expected 'modality <name>'");
  }
  const auto modality = parse_modality(mod_tokens[1]);
  if (!modality || *modality == Modality::kVisual) {
    reader.fail("unknown semantic modality '" + std::string(mod_tokens[1]) +
                "' (expected label, description or attributes)");
  }
  table.modality = *modality;
  table.dim = expect_dims(reader);
  while (reader.next(line)) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) {
      reader.fail("expected '<class_id> <values...>'");
    }
    Vec64 v = parse_vector(reader, std::span(tokens).subspan(1), table.dim);
    if (!table.vectors.emplace(std::string(tokens[0]), std::move(v)).second) {
      reader.fail("duplicate class '" + std::string(tokens[0]) + "'");
    }
  }
  return table;
}

ClassSplit load_split(const std::filesystem::path& path) {
  LineReader reader(path);
  std::string line;
  ClassSplit split;
  std::vector<std::string>* section = nullptr;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_ids;
  bool first = true;
  while (reader.next(line)) {
    const auto tokens = split_ws(line);
    // An optional "FSLSPLIT 1" version line may precede the sections.
    if (first && !tokens.empty() && tokens[0] == "FSLSPLIT") {
      first = false;
      if (tokens.size() != 2 || tokens[1] != "1") {
        reader.fail("unsupported split header");
      }
      continue;
    }
    first = false;
    if (tokens.size() != 1) {
      reader.fail("expected a section header or a single class id");
    }
    const std::string token(tokens[0]);
    if (token.front() == '[') {
      if (token == "[train]") {
        section = &split.train;
      } else if (token == "[val]") {
        section = &split.val;
      } else if (token == "[test]") {
        section = &split.test;
      } else {
        reader.fail("unknown section " + token);
      }
      if (!seen_sections.insert(token).second) {
        reader.fail("section " + token + " repeated");
      }
      continue;
    }
    if (section == nullptr) {
      reader.fail("class id outside of a section");
    }
    if (!seen_ids.insert(token).second) {
      reader.fail("class '" + token + "' listed more than once");
    }
    section->push_back(token);
  }
  return split;
}

void write_features(const FeatureTable& table, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "FSLFEAT 1\n" << "dims " << table.dim() << '\n';
  std::string line;
  for (const auto& cls : table.classes()) {
    for (const auto& inst : cls.instances) {
      line = cls.class_id + ' ' + inst.item_id;
      append_vector(line, inst.features);
      line += '\n';
      out << line;
    }
  }
  finish_write(out, path);
}

void write_semantics(const SemanticTable& table,
                     const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "FSLSEM 1\n"
      << "modality " << modality_name(table.modality) << '\n'
      << "dims " << table.dim << '\n';
  std::string line;
  for (const auto& [id, v] : table.vectors) {
    line = id;
    append_vector(line, v);
    line += '\n';
    out << line;
  }
  finish_write(out, path);
}

void write_split(const ClassSplit& split, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  for (const SplitName s : {SplitName::kTrain, SplitName::kVal, SplitName::kTest}) {
    out << '[' << split_name(s) << "]\n";
    for (const auto& id : split.get(s)) {
      out << id << '\n';
    }
  }
  finish_write(out, path);
}

Episode sample_episode(Rng& rng, const FewShotDataset& dataset, SplitName split,
                       int way, int shot, int query_per_class) {
  if (way < 1 || shot < 1 || query_per_class < 0) {
    throw ConfigError("sample_episode: way and shot must be positive");
  }
  const auto& pool = dataset.split().get(split);
  if (pool.size() < static_cast<std::size_t>(way)) {
    throw DataError("sample_episode: split '" + std::string(split_name(split)) +
                    "' has " + std::to_string(pool.size()) +
                    " classes, need " + std::to_string(way));
  }

  // Partial Fisher–Yates over class indices.
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < way; ++i) {
    const auto j = i + rng.uniform_index(order.size() - i);
    std::swap(order[i], order[j]);
  }

  const auto per_class = static_cast<std::size_t>(shot + query_per_class);
  const Eigen::Index dim = dataset.features().dim();
  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.query_per_class = query_per_class;
  ep.support.resize(way * shot, dim);
  ep.queries.resize(way * query_per_class, dim);
  for (int c = 0; c < way; ++c) {
    const std::string& id = pool[order[c]];
    ep.class_ids.push_back(id);
    const auto& instances = dataset.features().at(id).instances;
    if (instances.size() < per_class) {
      throw DataError("sample_episode: class '" + id + "' has " +
                      std::to_string(instances.size()) + " instances, need " +
                      std::to_string(per_class));
    }
    std::vector<std::size_t> pick(instances.size());
    std::iota(pick.begin(), pick.end(), 0);
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto j = i + rng.uniform_index(pick.size() - i);
      std::swap(pick[i], pick[j]);
    }
    for (int s = 0; s < shot; ++s) {
      const auto& inst = instances[pick[s]];
      ep.support.row(c * shot + s) = inst.features.transpose();
      ep.support_items.push_back(id + "/" + inst.item_id);
    }
    for (int q = 0; q < query_per_class; ++q) {
      const auto& inst = instances[pick[shot + q]];
      ep.queries.row(c * query_per_class + q) = inst.features.transpose();
      ep.query_items.push_back(id + "/" + inst.item_id);
      ep.query_labels.push_back(c);
    }
  }
  for (const auto& [m, table] : dataset.semantics()) {
    Mat64 rows(way, table.dim);
    for (int c = 0; c < way; ++c) {
      rows.row(c) = table.vectors.at(ep.class_ids[c]).transpose();
    }
    ep.semantics.emplace(m, std::move(rows));
  }
  return ep;
}

void SynthSpec::validate() const {
  if (n_classes <= 0 || instances_per_class <= 0 || feature_dim <= 0) {
    throw ConfigError("synth: class count, instance count and dim must be positive");
  }
  if (centroid_std < 0.0 || instance_std < 0.0) {
    throw ConfigError("synth: standard deviations must be non-negative");
  }
  std::set<Modality> seen;
  for (const auto& m : modalities) {
    if (m.modality == Modality::kVisual) {
      throw ConfigError("synth: 'visual' is not a semantic modality");
    }
    if (!seen.insert(m.modality).second) {
      throw ConfigError("synth: modality '" +
                        std::string(modality_name(m.modality)) +
                        "' listed twice");
    }
    if (m.dim <= 0) {
      throw ConfigError("synth: semantic dims must be positive");
    }
    if (!(m.informativeness >= 0.0 && m.informativeness <= 1.0)) {
      throw ConfigError("synth: informativeness must lie in [0, 1]");
    }
  }
  if (train_classes < 0 || val_classes < 0 || test_classes < 0 ||
      train_classes + val_classes + test_classes > n_classes) {
    throw ConfigError("synth: split counts exceed the number of classes");
  }
}

SynthTruth synthetic_truth(const SynthSpec& spec) {
  spec.validate();
  SynthTruth truth;
  Rng centroid_rng(derive_seed(spec.seed, "centroids"));
  for (int c = 0; c < spec.n_classes; ++c) {
    truth.centroids.push_back(
        sample_gaussian(centroid_rng, spec.feature_dim, 0.0, spec.centroid_std));
  }
  const double map_std = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
  for (const auto& m : spec.modalities) {
    Rng map_rng(derive_seed(spec.seed, "map:" + std::string(modality_name(m.modality))));
    Mat64 w(m.dim, spec.feature_dim);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        w(i, j) = map_std * map_rng.normal();
      }
    }
    truth.maps.emplace(m.modality, std::move(w));
  }
  return truth;
}

namespace {

std::string class_label(int c) {
  std::string digits = std::to_string(c);
  return "c" + std::string(digits.size() < 4 ? 4 - digits.size() : 0, '0') + digits;
}

}  // namespace

FewShotDataset generate_synthetic(const SynthSpec& spec) {
  const SynthTruth truth = synthetic_truth(spec);

  FeatureTable features(spec.feature_dim);
  Rng instance_rng(derive_seed(spec.seed, "instances"));
  for (int c = 0; c < spec.n_classes; ++c) {
    for (int i = 0; i < spec.instances_per_class; ++i) {
      Vec64 x = truth.centroids[c] + sample_gaussian(instance_rng, spec.feature_dim,
                                                     0.0, spec.instance_std);
      features.add(class_label(c), {"i" + std::to_string(i), std::move(x)});
    }
  }

  std::vector<SemanticTable> semantics;
  for (const auto& m : spec.modalities) {
    Rng noise_rng(derive_seed(spec.seed, "noise:" + std::string(modality_name(m.modality))));
    SemanticTable table{m.modality, m.dim, {}};
    const Mat64& w = truth.maps.at(m.modality);
    const double rho = m.informativeness;
    for (int c = 0; c < spec.n_classes; ++c) {
      const Vec64 noise = sample_gaussian(noise_rng, m.dim, 0.0, 1.0);
      Vec64 s = rho * (w * truth.centroids[c]);
      if (rho != 1.0) {
        s += (1.0 - rho) * noise;
      }
      table.vectors.emplace(class_label(c), std::move(s));
    }
    semantics.push_back(std::move(table));
  }

  int n_train = spec.train_classes;
  int n_val = spec.val_classes;
  int n_test = spec.test_classes;
  if (n_train + n_val + n_test == 0) {
    n_train = static_cast<int>(std::lround(0.6 * spec.n_classes));
    n_val = static_cast<int>(std::lround(0.2 * spec.n_classes));
    n_test = spec.n_classes - n_train - n_val;
  }
  std::vector<int> order(static_cast<std::size_t>(spec.n_classes));
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(spec.seed, "split"));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[split_rng.uniform_index(i)]);
  }
  ClassSplit split;
  for (int i = 0; i < n_train + n_val + n_test; ++i) {
    auto& section = i < n_train ? split.train
                    : i < n_train + n_val ? split.val
                                          : split.test;
    section.push_back(class_label(order[static_cast<std::size_t>(i)]));
  }
  return FewShotDataset::assemble(std::move(features), std::move(semantics),
                                  std::move(split));
}

DatasetFiles write_dataset(const FewShotDataset& dataset,
                           const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw EnvironmentError(dir.string() + ": " + ec.message());
  }
  DatasetFiles files;
  files.features = dir / "features.fslfeat";
  write_features(dataset.features(), files.features);
  for (const auto& [m, table] : dataset.semantics()) {
    auto path = dir / (std::string(modality_name(m)) + ".fslsem");
    write_semantics(table, path);
    files.semantics.push_back(std::move(path));
  }
  files.split = dir / "split.fslsplit";
  write_split(dataset.split(), files.split);
  return files;
}

FewShotDataset load_dataset(const DatasetFiles& files) {
  std::vector<SemanticTable> semantics;
  for (const auto& p : files.semantics) {
    semantics.push_back(load_semantics(p));
  }
  return FewShotDataset::assemble(load_features(files.features),
                                  std::move(semantics), load_split(files.split));
}

}  // namespace protofuse
