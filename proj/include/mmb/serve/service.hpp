#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmb/imagefeat/features.hpp"
#include "mmb/numerics/rng.hpp"
#include "mmb/safety/safety.hpp"
#include "mmb/train/data.hpp"
#include "mmb/train/runtime.hpp"

namespace mmb::serve {

/// Request-level failure with a stable machine-readable code.
class ServeError : public std::runtime_error {
 public:
  ServeError(std::string code, const std::string& message, int status)
      : std::runtime_error(message), code_(std::move(code)), status_(status) {}
  const std::string& code() const { return code_; }
  int http_status() const { return status_; }

 private:
  std::string code_;
  int status_;
};

struct ServeOptions {
  std::string default_gender = "f0 m0";
  /// Style line for image sessions that ask for no particular style.
  std::string default_bucket{safety::kPositiveNeutral};
  /// Style line for text-only sessions; none by default.
  std::optional<std::string> text_only_style;
  decode::BeamConfig beam = train::desk_beam();
  text::BatchLimits limits;
  /// Human turns are persona-free chit-chat: text-only sessions use this role.
  text::DatasetRole text_role = text::DatasetRole::ConvAI2;
  std::uint64_t seed = 0;  // 0 draws session ids from std::random_device
};

struct Conditioning {
  std::optional<std::string> style;
  std::string gender;
};

struct Turn {
  std::string speaker;  // "human" or "model"
  std::string text;
};

struct ChatResponse {
  std::string text;
  safety::SafetyVerdict safety;
  std::vector<int> tokens;
  std::vector<int> context;  // encoder input ids, used for context blocking
  double log_prob = 0.0;
  bool finished = false;
  std::size_t blocked_fallback_steps = 0;
};

struct SessionInfo {
  std::string session_id;
  std::optional<std::string> image_id;
  Conditioning conditioning;
  std::vector<Turn> history;
  std::int64_t created_at = 0;  // unix seconds
};

struct SessionStart {
  SessionInfo session;
  std::optional<ChatResponse> opening;
};

struct SafetyTools {
  safety::Blocklist blocklist;
  std::shared_ptr<const safety::OffensiveClassifier> classifier;  // may be null
  safety::GenderLexicon lexicon;
  std::shared_ptr<const safety::StyleRegistry> styles;  // may be null: styles then go unchecked
};

/// Session store plus inference. The model is shared read-only; each session serializes its
/// own generations while different sessions proceed in parallel.
class ChatService {
 public:
  ChatService(std::shared_ptr<const train::ChatModel> model, std::shared_ptr<const img::FeatureStore> store,
              SafetyTools tools, ServeOptions options = {});

  SessionStart create_session(const std::optional<std::string>& image_id, const nlohmann::json& conditioning);
  ChatResponse chat(const std::string& session_id, const std::string& message);
  SessionInfo session(const std::string& session_id) const;
  /// Ids in the feature store, sorted.
  std::vector<std::string> image_ids() const;
  std::size_t session_count() const;

  const ServeOptions& options() const { return options_; }
  const train::ChatModel& model() const { return *model_; }

 private:
  struct Session {
    SessionInfo info;
    train::ImagePtr image;
    mutable std::mutex mu;
  };

  Conditioning parse_conditioning(const nlohmann::json& j, bool has_image) const;
  std::shared_ptr<Session> find(const std::string& id) const;
  ChatResponse reply(const Session& s) const;
  std::string new_id();

  std::shared_ptr<const train::ChatModel> model_;
  std::shared_ptr<const img::FeatureStore> store_;
  train::ImageResolver resolver_;
  SafetyTools tools_;
  ServeOptions options_;

  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mu_;
  num::SplitMix64 id_rng_;
};

nlohmann::json to_json(const safety::SafetyVerdict& v);
nlohmann::json to_json(const ChatResponse& r);
nlohmann::json to_json(const SessionInfo& s);
nlohmann::json error_json(const std::string& code, const std::string& message);

}  // namespace mmb::serve
