#pragma once

#include <stdexcept>
#include <string>

namespace webtraj {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Configuration or input-file problems. CLI maps these to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Site-spec or artifact files failing schema validation.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// Action-DSL parse failures, with the failure class preserved.
class ActionParseError : public Error {
 public:
  enum class Kind { UnknownAction, MalformedArguments, MalformedString };

  ActionParseError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Agent response missing a parseable <action> block.
class NoActionError : public Error {
 public:
  using Error::Error;
};

/// Judge reply missing a tag or carrying a label outside its closed set.
class VerdictParseError : public Error {
 public:
  using Error::Error;
};

/// Template instantiation hit an unbound or malformed placeholder.
class TemplateError : public Error {
 public:
  TemplateError(const std::string& variable, const std::string& msg)
      : Error(msg), variable_(variable) {}
  const std::string& variable() const { return variable_; }

 private:
  std::string variable_;
};

/// Marker base for errors the retry wrapper is allowed to retry.
class RetryableError : public Error {
 public:
  using Error::Error;
};

/// Network-level failure: connect/timeout/non-2xx.
class TransportError : public RetryableError {
 public:
  using RetryableError::RetryableError;
};

/// 2xx reply whose body does not match the chat-completions schema.
class ProtocolError : public RetryableError {
 public:
  using RetryableError::RetryableError;
};

/// Request rejected before send (oversized prompt, bad message shape).
/// Never retried.
class InvalidRequestError : public Error {
 public:
  using Error::Error;
};

/// Raised by with_retries after the final attempt fails.
class RetriesExhausted : public Error {
 public:
  RetriesExhausted(const std::string& msg, int attempts)
      : Error(msg + " (attempts=" + std::to_string(attempts) + ")"), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Prompt composition could not fit the mandatory sections in the budget.
class BudgetExceededError : public Error {
 public:
  using Error::Error;
};

}  // namespace webtraj
