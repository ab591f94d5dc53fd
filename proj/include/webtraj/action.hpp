#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace webtraj {

// One-action-per-step language. Grammar reference: docs/action_dsl.md.

struct Click {
  std::string bid;
  bool operator==(const Click&) const = default;
};
struct Fill {
  std::string bid;
  std::string text;
  bool operator==(const Fill&) const = default;
};
struct SelectOption {
  std::string bid;
  std::string option;
  bool operator==(const SelectOption&) const = default;
};
struct Scroll {
  long long dx = 0;
  long long dy = 0;
  bool operator==(const Scroll&) const = default;
};
struct KeyboardPress {
  std::string key;
  bool operator==(const KeyboardPress&) const = default;
};
struct Hover {
  std::string bid;
  bool operator==(const Hover&) const = default;
};
struct Goto {
  std::string url;
  bool operator==(const Goto&) const = default;
};
struct GoBack {
  bool operator==(const GoBack&) const = default;
};
struct SendMsgToUser {
  std::string text;
  bool operator==(const SendMsgToUser&) const = default;
};

/// An argument of a registry-extended verb.
using CustomArg = std::variant<std::string, long long>;

/// Action parsed through a registered non-builtin verb. Only produced when
/// the caller registered the verb; unknown verbs stay parse errors.
struct CustomAction {
  std::string verb;
  std::vector<CustomArg> args;
  bool operator==(const CustomAction&) const = default;
};

using Action = std::variant<Click, Fill, SelectOption, Scroll, KeyboardPress, Hover, Goto,
                            GoBack, SendMsgToUser, CustomAction>;

/// Verb name of an action as it appears in the rendered form.
std::string action_verb(const Action& action);

bool is_send_msg(const Action& action);

/// Parameter kinds for registry-extended verbs.
enum class ArgKind { Str, Int };

struct VerbSignature {
  std::string verb;
  std::vector<ArgKind> params;
};

/// Verb table driving the parser. Default-constructed registries know the
/// nine builtin verbs; extra verbs parse into CustomAction.
class VerbRegistry {
 public:
  VerbRegistry();
  void register_verb(VerbSignature sig);
  const VerbSignature* find(std::string_view verb) const;

  static const VerbRegistry& builtin();

 private:
  std::vector<VerbSignature> extra_;
};

/// Parses the canonical text form of an action. Whitespace between tokens is
/// ignored; string arguments are double-quoted with backslash escapes for
/// `"` and `\`. Throws ActionParseError on unknown verbs, arity/type
/// mismatches, and unterminated strings.
Action parse_action(std::string_view text, const VerbRegistry& registry = VerbRegistry::builtin());

/// Canonical single-line rendering; parse_action(render_action(a)) == a.
std::string render_action(const Action& action);

/// thought/think/action blocks of one agent turn. For the round-trip
/// guarantee, block texts must not contain the literal opening or closing
/// tag of any recognized block (first-match extraction would pick them up).
struct AgentResponse {
  std::optional<std::string> thought;
  std::optional<std::string> think;
  Action action;
  std::string raw;

  bool operator==(const AgentResponse& other) const {
    return thought == other.thought && think == other.think && action == other.action;
  }
};

/// Extracts the first <thought>, <think> and <action> blocks (exact,
/// case-sensitive tags; content outside tags is ignored). Throws
/// NoActionError when the action block is missing or its content fails
/// parse_action; the inner parse error text is carried in the message.
AgentResponse parse_agent_response(std::string_view text,
                                   const VerbRegistry& registry = VerbRegistry::builtin());

/// Emits present blocks in thought, think, action order, one per line.
/// Round-trips through parse_agent_response.
std::string render_agent_response(const AgentResponse& response);

}  // namespace webtraj
