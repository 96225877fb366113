#include "protofuse/episode.hpp"

namespace protofuse {

char modality_letter(Modality m) {
  switch (m) {
    case Modality::kLabel: return 'l';
    case Modality::kDescription: return 'd';
    case Modality::kAttributes: return 'a';
    case Modality::kVisual: return 'v';
  }
  return '?';
}

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kLabel: return "label";
    case Modality::kDescription: return "description";
    case Modality::kAttributes: return "attributes";
    case Modality::kVisual: return "visual";
  }
  return "unknown";
}

std::optional<Modality> parse_modality(std::string_view text) {
  for (const Modality m : {Modality::kLabel, Modality::kDescription,
                           Modality::kAttributes, Modality::kVisual}) {
    if (text.size() == 1 && text[0] == modality_letter(m)) {
      return m;
    }
    if (text == modality_name(m)) {
      return m;
    }
  }
  return std::nullopt;
}

}  // namespace protofuse
