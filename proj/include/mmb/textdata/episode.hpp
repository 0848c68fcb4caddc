#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mmb::text {

enum class DatasetRole { ConvAI2, ED, WoW, BST, ImageChat, Coco, Reddit };

std::string_view role_name(DatasetRole role);
/// Throws std::invalid_argument on unknown names.
DatasetRole parse_role(std::string_view name);
bool role_has_image(DatasetRole role);
bool role_is_text_only(DatasetRole role);

struct Episode {
  DatasetRole dataset_role = DatasetRole::ConvAI2;
  std::vector<std::string> context_turns;
  std::vector<std::string> persona_lines;
  std::optional<std::string> knowledge;
  std::optional<std::string> image_ref;
  std::optional<std::string> style;
  std::string label;
};

class EpisodeFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checks the role/image/style/label invariants; throws EpisodeFormatError.
void validate(const Episode& ep);

std::string to_json_line(const Episode& ep);
Episode parse_episode_line(std::string_view line);

/// Reads JSON Lines; blank lines are skipped. Errors carry the 1-based line number.
std::vector<Episode> read_episodes(std::istream& in);
std::vector<Episode> load_episodes(const std::string& path);
void write_episodes(std::ostream& out, const std::vector<Episode>& episodes);
void save_episodes(const std::string& path, const std::vector<Episode>& episodes);

}  // namespace mmb::text
