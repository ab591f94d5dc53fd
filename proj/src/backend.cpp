#include "webtraj/backend.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "webtraj/axtree.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

std::string role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

void validate_chat_messages(const std::vector<ChatMessage>& messages) {
  if (messages.empty() || messages.back().role != Role::User) {
    throw InvalidRequestError("chat requires a nonempty message list ending in a user message");
  }
}

// --- scripted backend -------------------------------------------------------

Script script_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad script JSON: ") + e.what());
  }
  Script script;
  if (j.contains("default")) script.default_reply = j.at("default").get<std::string>();
  for (const auto& entry : j.value("entries", ordered_json::array())) {
    ScriptEntry se;
    if (entry.contains("match")) {
      const auto& match = entry.at("match");
      if (match.is_string()) {
        se.substrings.push_back(match.get<std::string>());
      } else {
        se.substrings = match.get<std::vector<std::string>>();
      }
    }
    if (entry.contains("ordinal")) se.ordinal = entry.at("ordinal").get<std::size_t>();
    se.reply = entry.at("reply").get<std::string>();
    se.fail_times = entry.value("fail_times", 0);
    script.entries.push_back(std::move(se));
  }
  return script;
}

Script load_script(const std::string& path) {
  return script_from_json_text(read_text_file(path));
}

ScriptedBackend::ScriptedBackend(Script script) : script_(std::move(script)) {
  failures_left_.reserve(script_.entries.size());
  for (const ScriptEntry& entry : script_.entries) failures_left_.push_back(entry.fail_times);
}

std::string ScriptedBackend::chat(const std::vector<ChatMessage>& messages, const GenParams&) {
  validate_chat_messages(messages);
  const std::string& last_user = messages.back().text;
  std::size_t user_count = 0;
  for (const ChatMessage& m : messages) {
    if (m.role == Role::User) ++user_count;
  }

  std::lock_guard<std::mutex> lock(mutex_);
  for (std::size_t i = 0; i < script_.entries.size(); ++i) {
    const ScriptEntry& entry = script_.entries[i];
    if (entry.ordinal && *entry.ordinal != user_count) continue;
    bool all_found = true;
    for (const std::string& needle : entry.substrings) {
      if (last_user.find(needle) == std::string::npos) {
        all_found = false;
        break;
      }
    }
    if (!all_found) continue;
    if (failures_left_[i] > 0) {
      --failures_left_[i];
      throw TransportError("scripted failure injected for entry " + std::to_string(i));
    }
    return entry.reply;
  }
  if (script_.default_reply) return *script_.default_reply;
  throw ConfigError("scripted backend: no entry matched and the script has no default");
}

// --- retry backoff ------------------------------------------------------------

std::size_t backoff_delay_ms(const RetryPolicy& policy, int attempt, SplitMix64& rng) {
  if (policy.base_delay_ms == 0) return 0;
  std::size_t delay = policy.base_delay_ms;
  for (int i = 1; i < attempt && delay < policy.cap_delay_ms; ++i) delay *= 2;
  delay = std::min(delay, policy.cap_delay_ms);
  // Jitter in [delay/2, delay], seeded for reproducible test timing.
  return delay / 2 + static_cast<std::size_t>(rng.next_below(delay / 2 + 1));
}

// --- live backend ------------------------------------------------------------

struct LiveBackend::Impl {
  std::string base;
  std::string path;
  std::string api_key;
};

namespace {

ordered_json message_to_json(const ChatMessage& message) {
  ordered_json j;
  j["role"] = role_name(message.role);
  if (message.attachments.empty()) {
    j["content"] = message.text;
  } else {
    ordered_json content = ordered_json::array();
    content.push_back({{"type", "text"}, {"text", message.text}});
    for (const std::string& ref : message.attachments) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", ref}}}});
    }
    j["content"] = std::move(content);
  }
  return j;
}

}  // namespace

std::string LiveBackend::build_request_body(const std::vector<ChatMessage>& messages,
                                            const GenParams& params, const std::string& model) {
  ordered_json body;
  body["model"] = model;
  ordered_json msgs = ordered_json::array();
  for (const ChatMessage& m : messages) msgs.push_back(message_to_json(m));
  body["messages"] = std::move(msgs);
  body["max_tokens"] = params.max_new_tokens;
  body["temperature"] = params.temperature;
  if (params.seed) body["seed"] = *params.seed;
  for (const auto& [key, value] : params.extra) body[key] = value;
  return body.dump();
}

LiveBackend::LiveBackend(LiveBackendConfig config)
    : config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  std::size_t scheme_end = config_.endpoint.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError("backend endpoint must be a full URL: " + config_.endpoint);
  }
  std::size_t path_start = config_.endpoint.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    impl_->base = config_.endpoint;
    impl_->path = "/v1/chat/completions";
  } else {
    impl_->base = config_.endpoint.substr(0, path_start);
    impl_->path = config_.endpoint.substr(path_start);
  }
  if (const char* key = std::getenv(config_.api_key_env.c_str())) impl_->api_key = key;
}

LiveBackend::~LiveBackend() = default;

std::string LiveBackend::chat(const std::vector<ChatMessage>& messages, const GenParams& params) {
  validate_chat_messages(messages);
  if (config_.max_prompt_tokens > 0) {
    std::size_t total = 0;
    for (const ChatMessage& m : messages) total += estimate_tokens(m.text);
    if (total > config_.max_prompt_tokens) {
      throw InvalidRequestError("prompt estimate " + std::to_string(total) +
                                " exceeds max prompt tokens " +
                                std::to_string(config_.max_prompt_tokens));
    }
  }

  httplib::Client client(impl_->base);
  client.set_connection_timeout(static_cast<time_t>(config_.timeout_seconds));
  client.set_read_timeout(static_cast<time_t>(config_.timeout_seconds));
  httplib::Headers headers;
  if (!impl_->api_key.empty()) headers.emplace("Authorization", "Bearer " + impl_->api_key);

  std::string body = build_request_body(messages, params, config_.model);
  auto result = client.Post(impl_->path, headers, body, "application/json");
  if (!result) {
    throw TransportError("chat request failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw TransportError("chat request returned HTTP " + std::to_string(result->status));
  }
  try {
    ordered_json reply = ordered_json::parse(result->body);
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed chat-completions body: ") + e.what());
  }
}

}  // namespace webtraj
