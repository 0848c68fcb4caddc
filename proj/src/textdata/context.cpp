#include "mmb/textdata/context.hpp"

#include <vector>

namespace mmb::text {

std::string assemble_context(const Episode& ep, const ControlSettings& controls) {
  std::vector<std::string> lines;
  for (const auto& p : ep.persona_lines) lines.push_back(std::string(kPersonaPrefix) + p);
  if (controls.include_knowledge && ep.knowledge) {
    lines.push_back(std::string(kKnowledgePrefix) + *ep.knowledge);
  }
  for (const auto& t : ep.context_turns) lines.push_back(t);
  if (controls.style) lines.push_back(std::string(kStylePrefix) + *controls.style);

  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  if (controls.gender) {
    if (!out.empty()) out += ' ';
    out += *controls.gender;
  }
  return out;
}

}  // namespace mmb::text
