#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protofuse/numeric.hpp"

namespace protofuse {

enum class Modality { kLabel, kDescription, kAttributes, kVisual };

/// Single-letter code used by the branch grammar: l, d, a, v.
char modality_letter(Modality m);
/// Long name used in file headers: label, description, attributes, visual.
std::string_view modality_name(Modality m);
/// Accepts either the letter or the long name.
std::optional<Modality> parse_modality(std::string_view text);

/// One few-shot task. Rows are class-major: support row c·shot + s belongs to
/// class c; query rows are grouped by class in the same way.
struct Episode {
  int way = 0;
  int shot = 0;
  int query_per_class = 0;
  std::vector<std::string> class_ids;
  Mat64 support;  // (way·shot) × D_v
  Mat64 queries;  // (way·query_per_class) × D_v
  std::vector<int> query_labels;
  std::vector<std::string> support_items;
  std::vector<std::string> query_items;
  std::map<Modality, Mat64> semantics;  // way × dim, one row per class

  Eigen::Index query_count() const { return queries.rows(); }
};

}  // namespace protofuse
