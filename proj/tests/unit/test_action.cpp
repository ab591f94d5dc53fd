#include "doctest.h"
#include "helpers.hpp"
#include "webtraj/action.hpp"
#include "webtraj/errors.hpp"

using namespace webtraj;

TEST_CASE("parse_action handles the nine builtin verbs") {
  CHECK(parse_action("click(\"a51\")") == Action{Click{"a51"}});
  CHECK(parse_action("go_back()") == Action{GoBack{}});
  CHECK(parse_action("hover(\"h2\")") == Action{Hover{"h2"}});
  CHECK(parse_action("goto(\"sim://forum/home\")") == Action{Goto{"sim://forum/home"}});
  CHECK(parse_action("scroll(0, 200)") == Action{Scroll{0, 200}});
  CHECK(parse_action("scroll(-5,+7)") == Action{Scroll{-5, 7}});
  CHECK(parse_action("keyboard_press(\"Enter\")") == Action{KeyboardPress{"Enter"}});
  CHECK(parse_action("select_option(\"s\", \"Large\")") == Action{SelectOption{"s", "Large"}});
  CHECK(parse_action("send_msg_to_user(\"done\")") == Action{SendMsgToUser{"done"}});
}

TEST_CASE("escapes cover embedded quotes and backslashes") {
  Action parsed = parse_action(R"(fill("q", "say \"hi\""))");
  CHECK(parsed == Action{Fill{"q", "say \"hi\""}});
  CHECK(parse_action(R"(fill("q", "a\\b"))") == Action{Fill{"q", "a\\b"}});
}

TEST_CASE("whitespace between tokens is ignored") {
  CHECK(parse_action("  click (  \"a51\"  ) ") == Action{Click{"a51"}});
  CHECK(parse_action("scroll( 0 ,\n200 )") == Action{Scroll{0, 200}});
}

TEST_CASE("render_action emits the canonical single-line form") {
  CHECK(render_action(Scroll{0, 200}) == "scroll(0, 200)");
  CHECK(render_action(SendMsgToUser{"done"}) == "send_msg_to_user(\"done\")");
  CHECK(render_action(Fill{"q", "say \"hi\""}) == R"(fill("q", "say \"hi\""))");
  CHECK(render_action(GoBack{}) == "go_back()");
}

TEST_CASE("parse errors carry their class") {
  auto kind_of = [](const char* text) {
    try {
      parse_action(text);
    } catch (const ActionParseError& e) {
      return e.kind();
    }
    FAIL("expected a parse error for: ", text);
    return ActionParseError::Kind::UnknownAction;
  };
  CHECK(kind_of("frobnicate()") == ActionParseError::Kind::UnknownAction);
  CHECK(kind_of("click()") == ActionParseError::Kind::MalformedArguments);
  CHECK(kind_of("click(\"a\", \"b\")") == ActionParseError::Kind::MalformedArguments);
  CHECK(kind_of("scroll(1)") == ActionParseError::Kind::MalformedArguments);
  CHECK(kind_of("scroll(\"a\", 2)") == ActionParseError::Kind::MalformedArguments);
  CHECK(kind_of("click(\"unterminated") == ActionParseError::Kind::MalformedString);
  CHECK(kind_of("go_back() trailing") == ActionParseError::Kind::MalformedArguments);
  CHECK(kind_of("click(\"\")") == ActionParseError::Kind::MalformedArguments);  // empty bid
}

TEST_CASE("registered verbs parse into CustomAction; unregistered stay errors") {
  VerbRegistry registry;
  registry.register_verb({"dblclick", {ArgKind::Str}});
  registry.register_verb({"wait", {ArgKind::Int}});

  Action parsed = parse_action("dblclick(\"a1\")", registry);
  auto* custom = std::get_if<CustomAction>(&parsed);
  REQUIRE(custom != nullptr);
  CHECK(custom->verb == "dblclick");
  CHECK(render_action(parsed) == "dblclick(\"a1\")");
  CHECK(parse_action(render_action(parsed), registry) == parsed);
  CHECK(parse_action("wait(300)", registry) == Action{CustomAction{"wait", {300LL}}});

  CHECK_THROWS_AS(parse_action("dblclick(\"a1\")"), ActionParseError);  // builtin registry
}

TEST_CASE("10,000 random actions round-trip exactly") {
  SplitMix64 rng(20260810);
  for (int i = 0; i < 10000; ++i) {
    Action action = testutil::random_action(rng);
    CHECK(parse_action(render_action(action)) == action);
  }
}

TEST_CASE("render is canonical: equal parses render equally") {
  const char* variants[] = {"click(\"a51\")", "  click( \"a51\" )", "click (\"a51\")"};
  std::string canonical = render_action(parse_action(variants[0]));
  for (const char* text : variants) {
    CHECK(render_action(parse_action(text)) == canonical);
  }
}

TEST_CASE("parse_agent_response extracts the three blocks") {
  AgentResponse r = parse_agent_response(
      "<thought>Go to orders</thought><think>bid a5 is Orders</think>"
      "<action>click(\"a5\")</action>");
  CHECK(r.thought == "Go to orders");
  CHECK(r.think == "bid a5 is Orders");
  CHECK(r.action == Action{Click{"a5"}});
}

TEST_CASE("minimal response: thought and think stay absent") {
  AgentResponse r = parse_agent_response("<action>go_back()</action>");
  CHECK(!r.thought.has_value());
  CHECK(!r.think.has_value());
  CHECK(r.action == Action{GoBack{}});
}

TEST_CASE("missing or unparseable action block raises NoActionError") {
  CHECK_THROWS_AS(parse_agent_response("<thought>lost</thought>"), NoActionError);
  try {
    parse_agent_response("<action>frobnicate()</action>");
    FAIL("expected NoActionError");
  } catch (const NoActionError& e) {
    // carries the inner parse error
    CHECK(std::string(e.what()).find("frobnicate") != std::string::npos);
  }
}

TEST_CASE("content outside recognized tags is ignored") {
  AgentResponse r = parse_agent_response(
      "Sure! Here is my move.\n<action>click(\"z\")</action>\nHope that helps.");
  CHECK(r.action == Action{Click{"z"}});
}

TEST_CASE("only the first occurrence of each tag counts") {
  AgentResponse r = parse_agent_response(
      "<thought>first</thought><action>go_back()</action>"
      "<thought>second</thought><action>click(\"x\")</action>");
  CHECK(r.thought == "first");
  CHECK(r.action == Action{GoBack{}});
}

TEST_CASE("tag matching is exact and case-sensitive") {
  CHECK_THROWS_AS(parse_agent_response("<ACTION>go_back()</ACTION>"), NoActionError);
  AgentResponse r = parse_agent_response("<Thought>skip me</Thought><action>go_back()</action>");
  CHECK(!r.thought.has_value());
}

TEST_CASE("render_agent_response emits blocks in fixed order and round-trips") {
  AgentResponse full{"plan", "details", Click{"a1"}, ""};
  std::string rendered = render_agent_response(full);
  CHECK(rendered ==
        "<thought>plan</thought>\n<think>details</think>\n<action>click(\"a1\")</action>");
  CHECK(parse_agent_response(rendered) == full);

  AgentResponse bare{std::nullopt, std::nullopt, GoBack{}, ""};
  CHECK(parse_agent_response(render_agent_response(bare)) == bare);

  AgentResponse thought_only{"just thinking", std::nullopt, Scroll{0, -120}, ""};
  CHECK(parse_agent_response(render_agent_response(thought_only)) == thought_only);
}

TEST_CASE("random agent responses round-trip") {
  SplitMix64 rng(7);
  for (int i = 0; i < 2000; ++i) {
    AgentResponse response = testutil::random_response(rng);
    CHECK(parse_agent_response(render_agent_response(response)) == response);
  }
}
