#include "mmb/textdata/episode.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <utility>

#include "json.hpp"

namespace mmb::text {

namespace {
constexpr std::array<std::pair<DatasetRole, std::string_view>, 7> kRoles{{
    {DatasetRole::ConvAI2, "convai2"},
    {DatasetRole::ED, "ed"},
    {DatasetRole::WoW, "wow"},
    {DatasetRole::BST, "bst"},
    {DatasetRole::ImageChat, "image_chat"},
    {DatasetRole::Coco, "coco"},
    {DatasetRole::Reddit, "reddit"},
}};
}  // namespace

std::string_view role_name(DatasetRole role) {
  for (auto [r, name] : kRoles)
    if (r == role) return name;
  return "unknown";
}

DatasetRole parse_role(std::string_view name) {
  for (auto [r, n] : kRoles)
    if (n == name) return r;
  throw std::invalid_argument("unknown dataset_role '" + std::string(name) + "'");
}

bool role_has_image(DatasetRole role) {
  return role == DatasetRole::ImageChat || role == DatasetRole::Coco;
}

bool role_is_text_only(DatasetRole role) {
  return role == DatasetRole::ConvAI2 || role == DatasetRole::ED || role == DatasetRole::WoW ||
         role == DatasetRole::BST;
}

void validate(const Episode& ep) {
  const auto role = std::string(role_name(ep.dataset_role));
  if (role_has_image(ep.dataset_role) != ep.image_ref.has_value()) {
    throw EpisodeFormatError(role + ": image_ref must be present exactly for image_chat and coco");
  }
  if (ep.style && ep.dataset_role != DatasetRole::ImageChat) {
    throw EpisodeFormatError(role + ": style is only allowed for image_chat");
  }
  if (ep.label.empty()) throw EpisodeFormatError(role + ": empty label");
}

std::string to_json_line(const Episode& ep) {
  nlohmann::ordered_json j;
  j["dataset_role"] = role_name(ep.dataset_role);
  j["context_turns"] = ep.context_turns;
  if (!ep.persona_lines.empty()) j["persona_lines"] = ep.persona_lines;
  if (ep.knowledge) j["knowledge"] = *ep.knowledge;
  if (ep.image_ref) j["image_ref"] = *ep.image_ref;
  if (ep.style) j["style"] = *ep.style;
  j["label"] = ep.label;
  return j.dump();
}

Episode parse_episode_line(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw EpisodeFormatError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw EpisodeFormatError("episode must be a JSON object");
  Episode ep;
  try {
    ep.dataset_role = parse_role(j.at("dataset_role").get<std::string>());
    if (j.contains("context_turns")) ep.context_turns = j["context_turns"].get<std::vector<std::string>>();
    if (j.contains("persona_lines")) ep.persona_lines = j["persona_lines"].get<std::vector<std::string>>();
    if (j.contains("knowledge") && !j["knowledge"].is_null()) ep.knowledge = j["knowledge"].get<std::string>();
    if (j.contains("image_ref") && !j["image_ref"].is_null()) ep.image_ref = j["image_ref"].get<std::string>();
    if (j.contains("style") && !j["style"].is_null()) ep.style = j["style"].get<std::string>();
    ep.label = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw EpisodeFormatError(std::string("bad episode field: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw EpisodeFormatError(e.what());
  }
  validate(ep);
  return ep;
}

std::vector<Episode> read_episodes(std::istream& in) {
  std::vector<Episode> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_episode_line(line));
    } catch (const EpisodeFormatError& e) {
      throw EpisodeFormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Episode> load_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open episode file " + path);
  try {
    return read_episodes(in);
  } catch (const EpisodeFormatError& e) {
    throw EpisodeFormatError(path + ": " + e.what());
  }
}

void write_episodes(std::ostream& out, const std::vector<Episode>& episodes) {
  for (const auto& ep : episodes) out << to_json_line(ep) << '\n';
}

void save_episodes(const std::string& path, const std::vector<Episode>& episodes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write episode file " + path);
  write_episodes(out, episodes);
}

}  // namespace mmb::text
