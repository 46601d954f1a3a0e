#include "mash/common.hpp"

namespace mash {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::Human:
      return "human";
    case Label::AI:
      return "ai";
    case Label::Unknown:
      break;
  }
  return "unknown";
}

Label label_from_string(std::string_view text) {
  if (text == "human") {
    return Label::Human;
  }
  if (text == "ai") {
    return Label::AI;
  }
  if (text == "unknown" || text.empty()) {
    return Label::Unknown;
  }
  throw ConfigError("unknown label '" + std::string(text) + "'");
}

}  // namespace mash
