#include "mmb/serve/service.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <regex>

#include "mmb/textdata/context.hpp"

namespace mmb::serve {

namespace {

bool valid_gender(const std::string& g) {
  static const std::regex re("f[01] m[01]");
  return std::regex_match(g, re);
}

bool is_bucket(const std::string& s) { return s == safety::kPositiveNeutral || s == safety::kNegative; }

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

ChatService::ChatService(std::shared_ptr<const train::ChatModel> model, std::shared_ptr<const img::FeatureStore> store,
                         SafetyTools tools, ServeOptions options)
    : model_(std::move(model)),
      store_(std::move(store)),
      tools_(std::move(tools)),
      options_(std::move(options)),
      id_rng_(options_.seed != 0 ? options_.seed : (std::uint64_t{std::random_device{}()} << 32) ^ std::random_device{}()) {
  if (!model_) throw std::invalid_argument("ChatService needs a model");
  if (!valid_gender(options_.default_gender))
    throw std::invalid_argument("default gender control must look like \"f0 m1\", got \"" + options_.default_gender + "\"");
  if (!is_bucket(options_.default_bucket))
    throw std::invalid_argument("default bucket must be \"positive/neutral\" or \"negative\"");
  options_.beam.validate();
  if (store_) resolver_ = train::store_resolver(store_);
}

std::string ChatService::new_id() {
  std::lock_guard lock(id_mu_);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_.next()));
  return buf;
}

Conditioning ChatService::parse_conditioning(const nlohmann::json& j, bool has_image) const {
  Conditioning c;
  c.gender = options_.default_gender;
  c.style = has_image ? std::optional<std::string>(options_.default_bucket) : options_.text_only_style;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ServeError("BAD_REQUEST", "conditioning must be an object", 400);
  if (j.contains("style")) {
    if (j["style"].is_null()) {
      c.style.reset();
    } else if (!j["style"].is_string()) {
      throw ServeError("BAD_REQUEST", "conditioning.style must be a string", 400);
    } else {
      auto s = j["style"].get<std::string>();
      if (!is_bucket(s) && tools_.styles && !tools_.styles->contains(s))
        throw ServeError("UNKNOWN_STYLE", "unknown style '" + s + "'", 400);
      c.style = std::move(s);
    }
  }
  if (j.contains("gender")) {
    if (!j["gender"].is_string() || !valid_gender(j["gender"].get<std::string>()))
      throw ServeError("BAD_REQUEST", "conditioning.gender must look like \"f0 m0\"", 400);
    c.gender = j["gender"].get<std::string>();
  }
  return c;
}

SessionStart ChatService::create_session(const std::optional<std::string>& image_id,
                                         const nlohmann::json& conditioning) {
  auto s = std::make_shared<Session>();
  if (image_id) {
    if (!store_ || !store_->contains(*image_id))
      throw ServeError("IMAGE_NOT_FOUND", "no features for image '" + *image_id + "'", 404);
    s->image = resolver_(*image_id);
  }
  s->info.image_id = image_id;
  s->info.conditioning = parse_conditioning(conditioning, image_id.has_value());
  s->info.created_at = now_seconds();

  SessionStart out;
  if (image_id) {
    auto opening = reply(*s);
    s->info.history.push_back({"model", opening.text});
    out.opening = std::move(opening);
  }
  {
    std::unique_lock lock(sessions_mu_);
    do s->info.session_id = new_id();
    while (sessions_.count(s->info.session_id));
    sessions_.emplace(s->info.session_id, s);
  }
  out.session = s->info;
  return out;
}

std::shared_ptr<ChatService::Session> ChatService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServeError("SESSION_NOT_FOUND", "unknown session '" + id + "'", 404);
  return it->second;
}

ChatResponse ChatService::chat(const std::string& session_id, const std::string& message) {
  auto s = find(session_id);
  if (message.find_first_not_of(" \t\r\n") == std::string::npos)
    throw ServeError("EMPTY_MESSAGE", "message is empty", 400);
  std::lock_guard lock(s->mu);
  s->info.history.push_back({"human", message});
  ChatResponse r;
  try {
    r = reply(*s);
  } catch (...) {
    s->info.history.pop_back();
    throw;
  }
  s->info.history.push_back({"model", r.text});
  return r;
}

ChatResponse ChatService::reply(const Session& s) const {
  text::Episode ep;
  ep.dataset_role = s.info.image_id ? text::DatasetRole::ImageChat : options_.text_role;
  ep.image_ref = s.info.image_id;
  for (const auto& t : s.info.history) ep.context_turns.push_back(t.text);

  text::ControlSettings controls;
  controls.style = s.info.conditioning.style;
  controls.gender = s.info.conditioning.gender;
  text::Example ex{text::assemble_context(ep, controls), "", s.image};

  auto g = train::generate(*model_, ex, options_.beam, options_.limits);
  ChatResponse r;
  r.text = g.text;
  r.tokens = g.tokens;
  r.context = g.context;
  r.log_prob = g.log_prob;
  r.finished = g.finished;
  r.blocked_fallback_steps = g.fallback_steps;
  r.safety = safety::assess(r.text, tools_.blocklist, tools_.classifier.get(), tools_.lexicon);
  return r;
}

SessionInfo ChatService::session(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mu);
  return s->info;
}

std::vector<std::string> ChatService::image_ids() const {
  if (!store_) return {};
  auto ids = store_->ids();
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::size_t ChatService::session_count() const {
  std::shared_lock lock(sessions_mu_);
  return sessions_.size();
}

nlohmann::json to_json(const safety::SafetyVerdict& v) {
  return {{"blocklist_hits", v.blocklist_hits},
          {"classifier_score", v.classifier_score},
          {"offensive_by_blocklist", v.offensive_by_blocklist},
          {"offensive_by_classifier", v.offensive_by_classifier},
          {"offensive", v.offensive_by_blocklist || v.offensive_by_classifier},
          {"gender_flags", {{"female", v.gender.female}, {"male", v.gender.male}, {"control", v.gender.control()}}}};
}

nlohmann::json to_json(const ChatResponse& r) {
  return {{"text", r.text},
          {"safety", to_json(r.safety)},
          {"stats",
           {{"log_prob", r.log_prob},
            {"tokens", r.tokens.size()},
            {"token_ids", r.tokens},
            {"context_ids", r.context},
            {"finished", r.finished},
            {"blocked_fallback_steps", r.blocked_fallback_steps}}}};
}

nlohmann::json to_json(const SessionInfo& s) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& t : s.history) history.push_back({{"speaker", t.speaker}, {"text", t.text}});
  return {{"session_id", s.session_id},
          {"image_id", s.image_id ? nlohmann::json(*s.image_id) : nlohmann::json(nullptr)},
          {"conditioning",
           {{"style", s.conditioning.style ? nlohmann::json(*s.conditioning.style) : nlohmann::json(nullptr)},
            {"gender", s.conditioning.gender}}},
          {"history", history},
          {"created_at", s.created_at}};
}

nlohmann::json error_json(const std::string& code, const std::string& message) {
  return {{"code", code}, {"message", message}};
}

}  // namespace mmb::serve
