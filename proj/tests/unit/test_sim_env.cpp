#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "webtraj/errors.hpp"
#include "webtraj/sim_env.hpp"

using namespace webtraj;

namespace {

const SiteSpec& forum() {
  static SiteSpec spec = load_site(testutil::repo_path("assets/sites/forum.json"));
  return spec;
}
const SiteSpec& commerce() {
  static SiteSpec spec = load_site(testutil::repo_path("assets/sites/commerce.json"));
  return spec;
}
const SiteSpec& micro() {
  static SiteSpec spec = load_site(testutil::repo_path("assets/sites/micro.json"));
  return spec;
}

// Brute-force effect interpreter, written independently of step(): walks the
// action list with explicit page/variable bookkeeping.
struct ReplayOracle {
  std::string page;
  std::string prev;
  bool has_prev = false;
  std::map<std::string, std::string> vars;
  std::vector<std::string> msgs;

  explicit ReplayOracle(const SiteSpec& spec) : page(spec.start_page), vars(spec.variables) {}

  void apply(const SiteSpec& spec, const Action& action) {
    std::string bid;
    std::string fill_text;
    if (const auto* c = std::get_if<Click>(&action)) bid = c->bid;
    if (const auto* h = std::get_if<Hover>(&action)) bid = h->bid;
    if (const auto* f = std::get_if<Fill>(&action)) {
      bid = f->bid;
      fill_text = f->text;
    }
    if (const auto* s = std::get_if<SelectOption>(&action)) {
      bid = s->bid;
      fill_text = s->option;
    }
    if (const auto* m = std::get_if<SendMsgToUser>(&action)) {
      msgs.push_back(m->text);
      return;
    }
    if (std::get_if<GoBack>(&action)) {
      if (has_prev) std::swap(page, prev);
      return;
    }
    if (const auto* g = std::get_if<Goto>(&action)) {
      std::string prefix = "sim://" + spec.site.value + "/";
      if (g->url.rfind(prefix, 0) == 0 && spec.pages.count(g->url.substr(prefix.size()))) {
        prev = page;
        has_prev = true;
        page = g->url.substr(prefix.size());
      }
      return;
    }
    if (bid.empty()) return;  // scroll / keyboard_press
    auto it = spec.pages.at(page).effects.find(bid);
    if (it == spec.pages.at(page).effects.end()) return;
    const Effect& effect = it->second;
    std::string value =
        effect.source.kind == ValueSourceKind::FromFillText ? fill_text : effect.source.literal;
    switch (effect.kind) {
      case EffectKind::Navigate:
        prev = page;
        has_prev = true;
        page = effect.target;
        break;
      case EffectKind::SetVar: vars[effect.target] = value; break;
      case EffectKind::AppendVar: vars[effect.target] += value; break;
      case EffectKind::Noop: break;
    }
  }
};

}  // namespace

TEST_CASE("bundled fixtures load with their documented step limits") {
  CHECK(forum().step_limit == 30);
  CHECK(commerce().step_limit == 30);
  CHECK(micro().step_limit == 15);
  CHECK(load_site(testutil::repo_path("assets/sites/wiki.json")).step_limit == 30);
  CHECK(forum().pages.count("home") == 1);
  CHECK(forum().start_page == "home");
}

TEST_CASE("schema violations are load errors naming the field") {
  const char* missing_page = R"({"site":"s","step_limit":5,"start_page":"home","variables":{},
    "pages":{"home":{"axtree":{"bid":"a","role":"generic","name":""},
             "effects":{"a1":{"type":"navigate","page":"nowhere"}}}}})";
  CHECK_THROWS_WITH_AS(site_spec_from_json_text(missing_page),
                       doctest::Contains("unknown page 'nowhere'"), LoadError);

  const char* zero_limit = R"({"site":"s","step_limit":0,"start_page":"home","variables":{},
    "pages":{"home":{"axtree":{"bid":"a","role":"generic","name":""}}}})";
  CHECK_THROWS_WITH_AS(site_spec_from_json_text(zero_limit), doctest::Contains("step_limit"),
                       LoadError);

  const char* bad_start = R"({"site":"s","step_limit":5,"start_page":"gone","variables":{},
    "pages":{"home":{"axtree":{"bid":"a","role":"generic","name":""}}}})";
  CHECK_THROWS_WITH_AS(site_spec_from_json_text(bad_start), doctest::Contains("start_page"),
                       LoadError);

  const char* undeclared_var = R"({"site":"s","step_limit":5,"start_page":"home","variables":{},
    "pages":{"home":{"axtree":{"bid":"a","role":"generic","name":""},
             "effects":{"a1":{"type":"set_var","name":"ghost","source":{"literal":"1"}}}}}})";
  CHECK_THROWS_WITH_AS(site_spec_from_json_text(undeclared_var), doctest::Contains("ghost"),
                       LoadError);
}

TEST_CASE("reset is deterministic and starts at the start page") {
  ResetResult a = reset(forum(), "Browse the forum");
  ResetResult b = reset(forum(), "Browse the forum");
  CHECK(a.observation.url == b.observation.url);
  CHECK(a.observation.axtree_text == b.observation.axtree_text);
  CHECK(a.observation.url == "sim://forum/home");
  CHECK(a.observation.goal == "Browse the forum");
  CHECK(!a.observation.last_action.has_value());
  CHECK(a.state.steps_taken == 0);
}

TEST_CASE("click on a navigate effect changes the page") {
  ResetResult fresh = reset(forum(), "g");
  StepOutcome out = step(fresh.state, Click{"a1"}, forum(), "g", 30);
  CHECK(out.state.current_page == "general");
  CHECK(out.observation.url == "sim://forum/general");
  CHECK(out.observation.last_action == "click(\"a1\")");
  CHECK(!out.terminal.has_value());
  CHECK(out.state.steps_taken == 1);
}

TEST_CASE("send_msg_to_user terminates with the message") {
  ResetResult fresh = reset(forum(), "g");
  StepOutcome out =
      step(fresh.state, SendMsgToUser{"I am done exploring the websites."}, forum(), "g", 30);
  REQUIRE(out.terminal.has_value());
  CHECK(out.terminal->kind == TerminalKind::Message);
  CHECK(out.terminal->message == "I am done exploring the websites.");
  CHECK(out.state.messages.size() == 1);
}

TEST_CASE("the limit-th step without a message terminates with step_limit") {
  EnvState state = reset(forum(), "g").state;
  for (int i = 0; i < 29; ++i) {
    StepOutcome out = step(state, Click{"a1"}, forum(), "g", 30);
    CHECK(!out.terminal.has_value());
    state = out.state;
  }
  StepOutcome last = step(state, Click{"a1"}, forum(), "g", 30);
  REQUIRE(last.terminal.has_value());
  CHECK(last.terminal->kind == TerminalKind::StepLimit);
  CHECK(last.state.steps_taken == 30);
}

TEST_CASE("unknown bids are recorded errors and leave the observation unchanged") {
  ResetResult fresh = reset(forum(), "g");
  StepOutcome out = step(fresh.state, Click{"zz"}, forum(), "g", 30);
  REQUIRE(out.error.has_value());
  CHECK(out.error->find("zz") != std::string::npos);
  CHECK(out.state.current_page == "home");
  CHECK(out.observation.url == fresh.observation.url);
  CHECK(out.observation.axtree_text == fresh.observation.axtree_text);
  CHECK(!out.terminal.has_value());
  CHECK(out.state.steps_taken == 1);  // errors still consume a step
}

TEST_CASE("fill feeds from_fill_text variable sources") {
  EnvState state = reset(forum(), "g").state;
  state = step(state, Click{"a1"}, forum(), "g", 30).state;  // general
  state = step(state, Click{"g1"}, forum(), "g", 30).state;  // post1
  state = step(state, Fill{"p1", "what a ride"}, forum(), "g", 30).state;
  CHECK(state.variables.at("comment_text") == "what a ride");
  state = step(state, Click{"p2"}, forum(), "g", 30).state;
  CHECK(state.variables.at("comment_posted") == "1");
}

TEST_CASE("goto navigates known sim urls and records errors for unknown ones") {
  EnvState state = reset(forum(), "g").state;
  StepOutcome ok = step(state, Goto{"sim://forum/offtopic"}, forum(), "g", 30);
  CHECK(ok.state.current_page == "offtopic");
  StepOutcome bad = step(ok.state, Goto{"https://elsewhere.example"}, forum(), "g", 30);
  CHECK(bad.error.has_value());
  CHECK(bad.state.current_page == "offtopic");
}

TEST_CASE("go_back keeps depth-1 history") {
  EnvState state = reset(forum(), "g").state;
  state = step(state, Click{"a1"}, forum(), "g", 30).state;  // home -> general
  state = step(state, Click{"g1"}, forum(), "g", 30).state;  // general -> post1
  state = step(state, GoBack{}, forum(), "g", 30).state;
  CHECK(state.current_page == "general");
  // Depth-1: going back again returns to post1, not home.
  state = step(state, GoBack{}, forum(), "g", 30).state;
  CHECK(state.current_page == "post1");
}

TEST_CASE("go_back without history is a recorded no-op") {
  EnvState state = reset(forum(), "g").state;
  StepOutcome out = step(state, GoBack{}, forum(), "g", 30);
  CHECK(out.state.current_page == "home");
  CHECK(!out.error.has_value());
}

TEST_CASE("scroll and keyboard_press are recorded no-ops") {
  EnvState state = reset(forum(), "g").state;
  StepOutcome s1 = step(state, Scroll{0, 400}, forum(), "g", 30);
  CHECK(s1.state.current_page == "home");
  CHECK(!s1.error.has_value());
  StepOutcome s2 = step(s1.state, KeyboardPress{"Tab"}, forum(), "g", 30);
  CHECK(s2.state.variables == state.variables);
}

TEST_CASE("check_goal covers the predicate and boolean algebra") {
  EnvState state = reset(commerce(), "g").state;
  state = step(state, Click{"m1"}, commerce(), "g", 30).state;
  state = step(state, Click{"k1"}, commerce(), "g", 30).state;
  state = step(state, Click{"r1"}, commerce(), "g", 30).state;  // add to cart

  CHECK(check_goal(state, goal_var_equals("cart_count", "1")));
  CHECK(!check_goal(state, goal_var_equals("cart_count", "2")));
  CHECK(check_goal(state, goal_on_page("product1")));
  CHECK(!check_goal(reset(commerce(), "g").state, goal_not(goal_on_page("home"))));
  CHECK(check_goal(state, goal_and({goal_var_equals("cart_count", "1"),
                                    goal_on_page("product1")})));
  CHECK(check_goal(state, goal_or({goal_on_page("nope"), goal_on_page("product1")})));
  state.messages.push_back("all done here");
  CHECK(check_goal(state, goal_message_contains("done")));
  CHECK(!check_goal(state, goal_message_contains("missing")));
  CHECK(check_goal(state, goal_var_contains("cart_count", "1")));
  CHECK(!check_goal(state, goal_never()));
  CHECK_THROWS_AS(check_goal(state, goal_var_equals("ghost", "1")), GoalEvalError);
}

TEST_CASE("check_goal agrees with the brute-force replay oracle on random episodes") {
  SplitMix64 rng(404);
  for (int episode = 0; episode < 200; ++episode) {
    const SiteSpec& spec = episode % 2 == 0 ? forum() : micro();
    EnvState state = reset(spec, "g").state;
    ReplayOracle oracle(spec);
    std::size_t moves = 1 + rng.next_below(10);
    for (std::size_t i = 0; i < moves; ++i) {
      // Draw from each page's actual bids plus some junk.
      std::vector<std::string> bids;
      for (const auto& [bid, effect] : spec.pages.at(state.current_page).effects) {
        bids.push_back(bid);
      }
      bids.push_back("junk");
      Action action;
      switch (rng.next_below(4)) {
        case 0: action = Click{bids[rng.next_below(bids.size())]}; break;
        case 1: action = Fill{bids[rng.next_below(bids.size())], testutil::random_text(rng, 8)}; break;
        case 2: action = GoBack{}; break;
        default: action = Scroll{1, 2}; break;
      }
      state = step(state, action, spec, "g", spec.step_limit + moves + 1).state;
      oracle.apply(spec, action);
    }
    CHECK(state.current_page == oracle.page);
    CHECK(state.variables == oracle.vars);
    for (const auto& [name, value] : oracle.vars) {
      CHECK(check_goal(state, goal_var_equals(name, value)));
    }
    CHECK(check_goal(state, goal_on_page(oracle.page)));
  }
}

namespace {

Script three_step_script() {
  Script script;
  script.entries.push_back({{"sim://micro/start\n", "None"}, std::nullopt,
                            "<thought>toggle the flag</thought><action>click(\"mi1\")</action>",
                            0});
  script.entries.push_back({{"sim://micro/start\n", "click(\"mi1\""}, std::nullopt,
                            "<action>fill(\"mi2\", \"ada\")</action>", 0});
  script.entries.push_back({{"sim://micro/start\n", "fill(\"mi2\""}, std::nullopt,
                            "<action>send_msg_to_user(\"finished\")</action>", 0});
  return script;
}

}  // namespace

TEST_CASE("run_episode follows a scripted three-step episode") {
  ScriptedBackend backend(three_step_script());
  AgentTask task{"task-000001", SiteId{"micro"}, "Toggle then report"};
  EpisodeOptions options;
  options.trajectory_id = "trajectory-000001";
  options.system_prompt = "You are a web agent.";
  Trajectory traj = run_episode(backend, task, micro(), TokenBudget{}, options);

  REQUIRE(traj.steps.size() == 3);
  CHECK(traj.terminal.kind == TerminalKind::Message);
  CHECK(traj.terminal.message == "finished");
  CHECK(traj.attempt == 1);
  CHECK(traj.steps[0].executed == Action{Click{"mi1"}});
  CHECK(traj.steps[1].executed == Action{Fill{"mi2", "ada"}});
  CHECK(is_send_msg(traj.steps[2].executed));
  CHECK(traj.steps[0].observation.goal == "Toggle then report");
  CHECK(traj.steps[0].index == 0);
  CHECK(traj.steps[2].index == 2);
  CHECK(validate_trajectory(traj, micro().step_limit).empty());

  EnvState replayed = replay_trajectory(micro(), traj, task.intent);
  CHECK(replayed.variables.at("flag") == "1");
  CHECK(replayed.variables.at("field") == "ada");
}

TEST_CASE("a backend that fails twice succeeds on attempt 3") {
  Script script = three_step_script();
  script.entries[0].fail_times = 2;
  ScriptedBackend backend(script);
  AgentTask task{"task-000001", SiteId{"micro"}, "Toggle then report"};
  EpisodeOptions options;
  options.trajectory_id = "trajectory-000001";
  options.system_prompt = "sys";
  Trajectory traj = run_episode(backend, task, micro(), TokenBudget{}, options);
  CHECK(traj.attempt == 3);
  CHECK(traj.terminal.kind == TerminalKind::Message);
  CHECK(traj.steps.size() == 3);
}

TEST_CASE("ten straight failures exhaust the attempts") {
  int calls = 0;
  FnBackend backend([&](const std::vector<ChatMessage>&, const GenParams&) -> std::string {
    ++calls;
    throw TransportError("down");
  });
  AgentTask task{"task-000001", SiteId{"micro"}, "anything"};
  EpisodeOptions options;
  options.trajectory_id = "trajectory-000001";
  options.system_prompt = "sys";
  Trajectory traj = run_episode(backend, task, micro(), TokenBudget{}, options);
  CHECK(traj.terminal.kind == TerminalKind::EnvError);
  CHECK(traj.attempt == 10);
  CHECK(calls == 10);
  CHECK(traj.steps.empty());
}

TEST_CASE("unparseable replies count as attempt failures") {
  int calls = 0;
  FnBackend backend([&](const std::vector<ChatMessage>&, const GenParams&) -> std::string {
    ++calls;
    return calls < 3 ? "no action here" : "<action>send_msg_to_user(\"ok\")</action>";
  });
  AgentTask task{"task-000001", SiteId{"micro"}, "anything"};
  EpisodeOptions options;
  options.trajectory_id = "t";
  options.system_prompt = "sys";
  Trajectory traj = run_episode(backend, task, micro(), TokenBudget{}, options);
  CHECK(traj.attempt == 3);
  CHECK(traj.terminal.kind == TerminalKind::Message);
}

TEST_CASE("step-limit overrides cap the episode below the site limit") {
  FnBackend backend([](const std::vector<ChatMessage>&, const GenParams&) {
    return std::string("<action>click(\"mi1\")</action>");
  });
  AgentTask task{"task-000001", SiteId{"micro"}, "never stops"};
  EpisodeOptions options;
  options.trajectory_id = "t";
  options.system_prompt = "sys";
  options.step_limit_override = 5;
  Trajectory traj = run_episode(backend, task, micro(), TokenBudget{}, options);
  CHECK(traj.steps.size() == 5);
  CHECK(traj.terminal.kind == TerminalKind::StepLimit);
}

TEST_CASE("identical inputs produce byte-identical trajectories") {
  auto run_once = [] {
    ScriptedBackend backend(three_step_script());
    AgentTask task{"task-000001", SiteId{"micro"}, "Toggle then report"};
    EpisodeOptions options;
    options.trajectory_id = "trajectory-000001";
    options.system_prompt = "sys";
    return serialize_trajectory(run_episode(backend, task, micro(), TokenBudget{}, options));
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("concurrent episodes on one spec never share state") {
  ScriptedBackend backend(three_step_script());
  Script other = three_step_script();
  other.entries[1].reply = "<action>fill(\"mi2\", \"grace\")</action>";
  other.entries[2].substrings = {"sim://micro/start\n", "fill(\"mi2\""};
  ScriptedBackend backend2(other);

  std::vector<std::function<Trajectory()>> jobs;
  jobs.push_back([&] {
    EpisodeOptions options;
    options.trajectory_id = "t1";
    options.system_prompt = "sys";
    return run_episode(backend, AgentTask{"a", SiteId{"micro"}, "Toggle then report"}, micro(),
                       TokenBudget{}, options);
  });
  jobs.push_back([&] {
    EpisodeOptions options;
    options.trajectory_id = "t2";
    options.system_prompt = "sys";
    return run_episode(backend2, AgentTask{"b", SiteId{"micro"}, "Toggle then report"}, micro(),
                       TokenBudget{}, options);
  });
  auto results = run_parallel(jobs, 2);
  REQUIRE(results[0].ok());
  REQUIRE(results[1].ok());
  EnvState s1 = replay_trajectory(micro(), *results[0].value, "g");
  EnvState s2 = replay_trajectory(micro(), *results[1].value, "g");
  CHECK(s1.variables.at("field") == "ada");
  CHECK(s2.variables.at("field") == "grace");
}
