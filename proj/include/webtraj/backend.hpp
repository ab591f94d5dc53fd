#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "webtraj/errors.hpp"
#include "webtraj/util.hpp"

namespace webtraj {

enum class Role { System, User, Assistant };

std::string role_name(Role role);

struct ChatMessage {
  Role role = Role::User;
  std::string text;
  std::vector<std::string> attachments;  // screenshot refs
};

struct GenParams {
  std::size_t max_new_tokens = 8192;
  double temperature = 0.0;
  std::optional<std::uint64_t> seed;
  /// Free-form passthrough for provider-specific knobs (e.g. thinking
  /// budgets); forwarded verbatim by the live backend, ignored elsewhere.
  std::map<std::string, std::string> extra;
};

/// Chat-completion backends. Implementations must be safe for concurrent
/// chat() calls from run_parallel workers.
class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns one completion. Throws TransportError / ProtocolError for
  /// retryable failures and InvalidRequestError for requests rejected
  /// before send. messages must be nonempty with a trailing user message.
  virtual std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) = 0;
};

void validate_chat_messages(const std::vector<ChatMessage>& messages);

// --- scripted backend -------------------------------------------------------

/// One canned reply. The predicate runs over the last user message: all of
/// `substrings` must occur in it, and when `ordinal` is set the request's
/// user-message count must equal it. The first `fail_times` matches raise a
/// transport error before the reply is served.
struct ScriptEntry {
  std::vector<std::string> substrings;
  std::optional<std::size_t> ordinal;
  std::string reply;
  int fail_times = 0;
};

struct Script {
  std::vector<ScriptEntry> entries;
  std::optional<std::string> default_reply;
};

Script script_from_json_text(const std::string& text);
Script load_script(const std::string& path);

/// Deterministic stand-in for a live endpoint: each request is answered by
/// the first matching entry, falling back to the script default. A request
/// matching nothing raises ConfigError (a script authoring bug, never
/// retried). Ignores attachments.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(Script script);
  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override;

 private:
  Script script_;
  std::vector<int> failures_left_;
  std::mutex mutex_;
};

/// Callback-backed backend for tests and oracles.
class FnBackend : public Backend {
 public:
  using Fn = std::function<std::string(const std::vector<ChatMessage>&, const GenParams&)>;
  explicit FnBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override {
    validate_chat_messages(messages);
    return fn_(messages, params);
  }

 private:
  Fn fn_;
};

// --- live backend ------------------------------------------------------------

struct LiveBackendConfig {
  std::string endpoint;  // full chat-completions URL
  std::string model;
  std::string api_key_env = "WEBTRAJ_API_KEY";
  /// Client-side guard: requests whose estimated prompt tokens exceed this
  /// are rejected before send. 0 disables the check.
  std::size_t max_prompt_tokens = 57344;
  std::size_t timeout_seconds = 120;
};

/// OpenAI-compatible chat-completions client (POST model/messages/
/// max_tokens/temperature). Screenshot attachments are encoded with the
/// image-content convention.
class LiveBackend : public Backend {
 public:
  explicit LiveBackend(LiveBackendConfig config);
  ~LiveBackend() override;
  std::string chat(const std::vector<ChatMessage>& messages, const GenParams& params) override;

  /// Request body builder, exposed for wire-format tests.
  static std::string build_request_body(const std::vector<ChatMessage>& messages,
                                        const GenParams& params, const std::string& model);

 private:
  struct Impl;
  LiveBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

// --- retry wrapper -----------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 10;
  /// Exponential backoff base/cap; scripted runs use base 0 for no waiting.
  std::size_t base_delay_ms = 1000;
  std::size_t cap_delay_ms = 30000;
  std::uint64_t jitter_seed = 0;
  /// Injection point so tests can observe or skip waiting.
  std::function<void(std::size_t)> sleep_ms;
};

std::size_t backoff_delay_ms(const RetryPolicy& policy, int attempt, SplitMix64& rng);

template <typename T>
struct RetryOutcome {
  T value;
  int attempts = 1;
};

/// Retries `fn` on RetryableError only, up to policy.max_attempts calls.
/// Non-retryable errors surface immediately; exhaustion raises
/// RetriesExhausted annotated with the attempt count.
template <typename F>
auto with_retries(F&& fn, const RetryPolicy& policy) {
  using T = std::invoke_result_t<F&>;
  if (policy.max_attempts < 1) throw ConfigError("with_retries: max_attempts must be >= 1");
  SplitMix64 rng(policy.jitter_seed);
  for (int attempt = 1;; ++attempt) {
    try {
      return RetryOutcome<T>{fn(), attempt};
    } catch (const RetryableError& e) {
      if (attempt >= policy.max_attempts) throw RetriesExhausted(e.what(), attempt);
      std::size_t delay = backoff_delay_ms(policy, attempt, rng);
      if (delay > 0 && policy.sleep_ms) policy.sleep_ms(delay);
    }
  }
}

// --- bounded-parallel batch execution -----------------------------------------

template <typename R>
struct JobResult {
  std::optional<R> value;
  std::string error;
  bool ok() const { return value.has_value(); }
};

/// Runs jobs with at most `workers` in flight; the results list is ordered
/// by input index regardless of completion order, and one job's failure
/// never aborts its siblings.
template <typename R>
std::vector<JobResult<R>> run_parallel(const std::vector<std::function<R()>>& jobs, int workers) {
  if (workers < 1) throw ConfigError("run_parallel: workers must be >= 1");
  std::vector<JobResult<R>> results(jobs.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      std::size_t index = next.fetch_add(1);
      if (index >= jobs.size()) return;
      try {
        results[index].value = jobs[index]();
      } catch (const std::exception& e) {
        results[index].error = e.what();
      } catch (...) {
        results[index].error = "unknown error";
      }
    }
  };

  std::size_t thread_count = std::min<std::size_t>(static_cast<std::size_t>(workers), jobs.size());
  if (thread_count <= 1) {
    worker();
    return results;
  }
  std::vector<std::thread> pool;
  pool.reserve(thread_count);
  for (std::size_t i = 0; i < thread_count; ++i) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  return results;
}

}  // namespace webtraj
