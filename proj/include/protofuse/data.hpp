#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "protofuse/episode.hpp"
#include "protofuse/numeric.hpp"

namespace protofuse {

struct Instance {
  std::string item_id;
  Vec64 features;

  bool operator==(const Instance& o) const {
    return item_id == o.item_id && features == o.features;
  }
};

struct ClassInstances {
  std::string class_id;
  std::vector<Instance> instances;

  bool operator==(const ClassInstances&) const = default;
};

/// Per-class raw visual feature vectors, classes in first-seen order.
class FeatureTable {
 public:
  explicit FeatureTable(Eigen::Index dim = 0) : dim_(dim) {}

  Eigen::Index dim() const { return dim_; }
  const std::vector<ClassInstances>& classes() const { return classes_; }
  bool contains(const std::string& class_id) const {
    return index_.contains(class_id);
  }
  const ClassInstances& at(const std::string& class_id) const;

  /// Throws DataError on a dimension mismatch or a duplicate (class, item).
  void add(const std::string& class_id, Instance instance);

  bool operator==(const FeatureTable& o) const {
    return dim_ == o.dim_ && classes_ == o.classes_;
  }

 private:
  Eigen::Index dim_;
  std::vector<ClassInstances> classes_;
  std::map<std::string, std::size_t> index_;
};

/// One modality's class-level vectors.
struct SemanticTable {
  Modality modality = Modality::kLabel;
  Eigen::Index dim = 0;
  std::map<std::string, Vec64> vectors;

  bool operator==(const SemanticTable&) const = default;
};

enum class SplitName { kTrain, kVal, kTest };
std::string_view split_name(SplitName s);
SplitName parse_split_name(std::string_view text);

struct ClassSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& get(SplitName s) const;
  bool operator==(const ClassSplit&) const = default;
};

/// Immutable, validated store. Only `assemble` constructs one, so a dataset
/// that violates its invariants never escapes.
class FewShotDataset {
 public:
  /// Checks: split sections disjoint and present in the feature table; each
  /// modality appears once, covers every class, and has a single dim.
  static FewShotDataset assemble(FeatureTable features,
                                 std::vector<SemanticTable> semantics,
                                 ClassSplit split);

  const FeatureTable& features() const { return features_; }
  const std::map<Modality, SemanticTable>& semantics() const {
    return semantics_;
  }
  const ClassSplit& split() const { return split_; }
  std::map<Modality, Eigen::Index> semantic_dims() const;

 private:
  FewShotDataset() = default;

  FeatureTable features_;
  std::map<Modality, SemanticTable> semantics_;
  ClassSplit split_;
};

FeatureTable load_features(const std::filesystem::path& path);
SemanticTable load_semantics(const std::filesystem::path& path);
ClassSplit load_split(const std::filesystem::path& path);

void write_features(const FeatureTable& table, const std::filesystem::path& path);
void write_semantics(const SemanticTable& table,
                     const std::filesystem::path& path);
void write_split(const ClassSplit& split, const std::filesystem::path& path);

/// Shortest decimal text that round-trips (17 significant digits max).
std::string format_double(double value);

/// Uniform class sample without replacement, then uniform instance sample
/// without replacement per class; the first `shot` go to the support set.
/// Throws DataError if the split is too small.
Episode sample_episode(Rng& rng, const FewShotDataset& dataset, SplitName split,
                       int way, int shot, int query_per_class);

struct SynthModality {
  Modality modality = Modality::kLabel;
  Eigen::Index dim = 0;
  double informativeness = 1.0;  // ρ in [0, 1]
};

struct SynthSpec {
  int n_classes = 100;
  int instances_per_class = 40;
  Eigen::Index feature_dim = 64;
  double centroid_std = 1.0;
  double instance_std = 0.6;
  std::vector<SynthModality> modalities;
  // Zero counts select a 60/20/20 partition.
  int train_classes = 0;
  int val_classes = 0;
  int test_classes = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Class centroids μ_c ~ N(0, σ_c²I), instances μ_c + N(0, σ_v²I), and per
/// modality s = ρ·W_m μ_c + (1−ρ)·ε with a fixed W_m (entries N(0, 1/D_v))
/// and ε ~ N(0, I). Every random stream derives from `seed`.
FewShotDataset generate_synthetic(const SynthSpec& spec);

/// The generator's class centroids and semantic maps, reproduced from the
/// same seed. Exposed so tests can build oracles.
struct SynthTruth {
  std::vector<Vec64> centroids;
  std::map<Modality, Mat64> maps;
};
SynthTruth synthetic_truth(const SynthSpec& spec);

/// Writes features.fslfeat, <modality>.fslsem and split.fslsplit into `dir`.
struct DatasetFiles {
  std::filesystem::path features;
  std::vector<std::filesystem::path> semantics;
  std::filesystem::path split;
};
DatasetFiles write_dataset(const FewShotDataset& dataset,
                           const std::filesystem::path& dir);
FewShotDataset load_dataset(const DatasetFiles& files);

}  // namespace protofuse
