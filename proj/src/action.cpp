#include "webtraj/action.hpp"

#include <cctype>

#include "webtraj/errors.hpp"
#include "webtraj/util.hpp"

namespace webtraj {

namespace {

struct BuiltinSpec {
  const char* verb;
  std::vector<ArgKind> params;
};

const std::vector<BuiltinSpec>& builtin_specs() {
  static const std::vector<BuiltinSpec> specs = {
      {"click", {ArgKind::Str}},
      {"fill", {ArgKind::Str, ArgKind::Str}},
      {"select_option", {ArgKind::Str, ArgKind::Str}},
      {"scroll", {ArgKind::Int, ArgKind::Int}},
      {"keyboard_press", {ArgKind::Str}},
      {"hover", {ArgKind::Str}},
      {"goto", {ArgKind::Str}},
      {"go_back", {}},
      {"send_msg_to_user", {ArgKind::Str}},
  };
  return specs;
}

std::string quote(std::string_view text) {
  std::string out;
  out.reserve(text.size() + 2);
  out.push_back('"');
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

class Scanner {
 public:
  explicit Scanner(std::string_view text) : text_(text) {}

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string read_identifier() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string read_string() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '"') {
      throw ActionParseError(ActionParseError::Kind::MalformedArguments,
                             "expected quoted string argument");
    }
    ++pos_;
    std::string out;
    while (pos_ < text_.size()) {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) break;
        char escaped = text_[pos_++];
        if (escaped == '"' || escaped == '\\') {
          out.push_back(escaped);
        } else {
          // Unknown escapes are kept verbatim so renderings stay minimal.
          out.push_back('\\');
          out.push_back(escaped);
        }
      } else if (c == '"') {
        return out;
      } else {
        out.push_back(c);
      }
    }
    throw ActionParseError(ActionParseError::Kind::MalformedString, "unterminated string");
  }

  long long read_integer() {
    skip_ws();
    std::size_t start = pos_;
    if (pos_ < text_.size() && (text_[pos_] == '-' || text_[pos_] == '+')) ++pos_;
    std::size_t digits_start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ == digits_start) {
      throw ActionParseError(ActionParseError::Kind::MalformedArguments,
                             "expected integer argument");
    }
    try {
      return std::stoll(std::string(text_.substr(start, pos_ - start)));
    } catch (const std::out_of_range&) {
      throw ActionParseError(ActionParseError::Kind::MalformedArguments,
                             "integer argument out of range");
    }
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

[[noreturn]] void arity_error(std::string_view verb) {
  throw ActionParseError(ActionParseError::Kind::MalformedArguments,
                         "malformed arguments for '" + std::string(verb) + "'");
}

}  // namespace

VerbRegistry::VerbRegistry() = default;

void VerbRegistry::register_verb(VerbSignature sig) { extra_.push_back(std::move(sig)); }

const VerbSignature* VerbRegistry::find(std::string_view verb) const {
  for (const auto& sig : extra_) {
    if (sig.verb == verb) return &sig;
  }
  return nullptr;
}

const VerbRegistry& VerbRegistry::builtin() {
  static const VerbRegistry registry;
  return registry;
}

std::string action_verb(const Action& action) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Click>) return "click";
        if constexpr (std::is_same_v<T, Fill>) return "fill";
        if constexpr (std::is_same_v<T, SelectOption>) return "select_option";
        if constexpr (std::is_same_v<T, Scroll>) return "scroll";
        if constexpr (std::is_same_v<T, KeyboardPress>) return "keyboard_press";
        if constexpr (std::is_same_v<T, Hover>) return "hover";
        if constexpr (std::is_same_v<T, Goto>) return "goto";
        if constexpr (std::is_same_v<T, GoBack>) return "go_back";
        if constexpr (std::is_same_v<T, SendMsgToUser>) return "send_msg_to_user";
        if constexpr (std::is_same_v<T, CustomAction>) return a.verb;
      },
      action);
}

bool is_send_msg(const Action& action) {
  return std::holds_alternative<SendMsgToUser>(action);
}

Action parse_action(std::string_view text, const VerbRegistry& registry) {
  Scanner scan(text);
  std::string verb = scan.read_identifier();
  if (verb.empty()) {
    throw ActionParseError(ActionParseError::Kind::UnknownAction, "missing action verb");
  }
  if (!scan.consume('(')) arity_error(verb);

  auto finish = [&](Action action) {
    if (!scan.consume(')')) arity_error(verb);
    if (!scan.at_end()) arity_error(verb);
    return action;
  };
  auto comma = [&] {
    if (!scan.consume(',')) arity_error(verb);
  };
  auto require_bid = [&](std::string value) {
    if (value.empty()) arity_error(verb);
    return value;
  };

  if (verb == "click") return finish(Click{require_bid(scan.read_string())});
  if (verb == "hover") return finish(Hover{require_bid(scan.read_string())});
  if (verb == "keyboard_press") return finish(KeyboardPress{scan.read_string()});
  if (verb == "goto") return finish(Goto{scan.read_string()});
  if (verb == "send_msg_to_user") return finish(SendMsgToUser{scan.read_string()});
  if (verb == "go_back") return finish(GoBack{});
  if (verb == "fill") {
    std::string bid = require_bid(scan.read_string());
    comma();
    return finish(Fill{std::move(bid), scan.read_string()});
  }
  if (verb == "select_option") {
    std::string bid = require_bid(scan.read_string());
    comma();
    return finish(SelectOption{std::move(bid), scan.read_string()});
  }
  if (verb == "scroll") {
    long long dx = scan.read_integer();
    comma();
    long long dy = scan.read_integer();
    return finish(Scroll{dx, dy});
  }

  if (const VerbSignature* sig = registry.find(verb)) {
    CustomAction action{verb, {}};
    for (std::size_t i = 0; i < sig->params.size(); ++i) {
      if (i > 0) comma();
      if (sig->params[i] == ArgKind::Str) {
        action.args.emplace_back(scan.read_string());
      } else {
        action.args.emplace_back(scan.read_integer());
      }
    }
    return finish(std::move(action));
  }

  throw ActionParseError(ActionParseError::Kind::UnknownAction, "unknown action verb '" + verb + "'");
}

std::string render_action(const Action& action) {
  return std::visit(
      [](const auto& a) -> std::string {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Click>) return "click(" + quote(a.bid) + ")";
        if constexpr (std::is_same_v<T, Fill>)
          return "fill(" + quote(a.bid) + ", " + quote(a.text) + ")";
        if constexpr (std::is_same_v<T, SelectOption>)
          return "select_option(" + quote(a.bid) + ", " + quote(a.option) + ")";
        if constexpr (std::is_same_v<T, Scroll>)
          return "scroll(" + std::to_string(a.dx) + ", " + std::to_string(a.dy) + ")";
        if constexpr (std::is_same_v<T, KeyboardPress>)
          return "keyboard_press(" + quote(a.key) + ")";
        if constexpr (std::is_same_v<T, Hover>) return "hover(" + quote(a.bid) + ")";
        if constexpr (std::is_same_v<T, Goto>) return "goto(" + quote(a.url) + ")";
        if constexpr (std::is_same_v<T, GoBack>) return "go_back()";
        if constexpr (std::is_same_v<T, SendMsgToUser>)
          return "send_msg_to_user(" + quote(a.text) + ")";
        if constexpr (std::is_same_v<T, CustomAction>) {
          std::string out = a.verb + "(";
          for (std::size_t i = 0; i < a.args.size(); ++i) {
            if (i > 0) out += ", ";
            if (const auto* s = std::get_if<std::string>(&a.args[i])) {
              out += quote(*s);
            } else {
              out += std::to_string(std::get<long long>(a.args[i]));
            }
          }
          return out + ")";
        }
      },
      action);
}

AgentResponse parse_agent_response(std::string_view text, const VerbRegistry& registry) {
  AgentResponse response{std::nullopt, std::nullopt, GoBack{}, std::string(text)};
  response.thought = first_tag_block(text, "thought");
  response.think = first_tag_block(text, "think");
  std::optional<std::string> action_text = first_tag_block(text, "action");
  if (!action_text) {
    throw NoActionError("agent response has no <action> block");
  }
  try {
    response.action = parse_action(*action_text, registry);
  } catch (const ActionParseError& e) {
    throw NoActionError(std::string("unparseable <action> block: ") + e.what());
  }
  return response;
}

std::string render_agent_response(const AgentResponse& response) {
  std::string out;
  if (response.thought) out += "<thought>" + *response.thought + "</thought>\n";
  if (response.think) out += "<think>" + *response.think + "</think>\n";
  out += "<action>" + render_action(response.action) + "</action>";
  return out;
}

}  // namespace webtraj
