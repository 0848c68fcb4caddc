#pragma once

#include <optional>
#include <string>

#include "mmb/textdata/episode.hpp"

namespace mmb::text {

inline constexpr std::string_view kPersonaPrefix = "your persona: ";
inline constexpr std::string_view kKnowledgePrefix = "[knowledge] ";
inline constexpr std::string_view kStylePrefix = "[style] ";

/// Already-resolved conditioning for one example.
struct ControlSettings {
  bool include_knowledge = true;
  /// Text of the style line: a concrete style or a bucket string. Absent → no line.
  std::optional<std::string> style;
  /// Gender control string such as "f0 m0". Absent → nothing appended.
  std::optional<std::string> gender;
};

/// Flat model input for an episode. Lines, joined by '\n':
///   "your persona: <p>" per persona line, "[knowledge] <k>", the context turns,
///   "[style] <s>"; the gender string is then appended after a single space.
std::string assemble_context(const Episode& ep, const ControlSettings& controls);

}  // namespace mmb::text
