#include "webtraj/sim_env.hpp"

#include "json.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

namespace {

GoalExprPtr make_goal(GoalExpr expr) {
  return std::make_shared<const GoalExpr>(std::move(expr));
}

}  // namespace

GoalExprPtr goal_and(std::vector<GoalExprPtr> children) {
  return make_goal({GoalExpr::Kind::And, std::move(children), {}, {}});
}
GoalExprPtr goal_or(std::vector<GoalExprPtr> children) {
  return make_goal({GoalExpr::Kind::Or, std::move(children), {}, {}});
}
GoalExprPtr goal_not(GoalExprPtr child) {
  return make_goal({GoalExpr::Kind::Not, {std::move(child)}, {}, {}});
}
GoalExprPtr goal_var_equals(std::string name, std::string value) {
  return make_goal({GoalExpr::Kind::VarEquals, {}, std::move(name), std::move(value)});
}
GoalExprPtr goal_var_contains(std::string name, std::string substr) {
  return make_goal({GoalExpr::Kind::VarContains, {}, std::move(name), std::move(substr)});
}
GoalExprPtr goal_on_page(std::string page) {
  return make_goal({GoalExpr::Kind::OnPage, {}, std::move(page), {}});
}
GoalExprPtr goal_message_contains(std::string substr) {
  return make_goal({GoalExpr::Kind::MessageContains, {}, {}, std::move(substr)});
}
GoalExprPtr goal_never() {
  // and(x, not(x)) is unsatisfiable for any state.
  GoalExprPtr probe = goal_on_page("");
  return goal_and({probe, goal_not(probe)});
}

namespace {

ValueSource value_source_from_json(const ordered_json& j, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "from_fill_text") {
      return ValueSource{ValueSourceKind::FromFillText, {}};
    }
    throw LoadError("effect " + where + ": source must be \"from_fill_text\" or {\"literal\": ...}");
  }
  if (j.is_object() && j.contains("literal")) {
    return ValueSource{ValueSourceKind::Literal, j.at("literal").get<std::string>()};
  }
  throw LoadError("effect " + where + ": bad value source");
}

Effect effect_from_json(const ordered_json& j, const std::string& where) {
  std::string type = j.at("type").get<std::string>();
  Effect effect;
  if (type == "navigate") {
    effect.kind = EffectKind::Navigate;
    effect.target = j.at("page").get<std::string>();
  } else if (type == "set_var" || type == "append_var") {
    effect.kind = type == "set_var" ? EffectKind::SetVar : EffectKind::AppendVar;
    effect.target = j.at("name").get<std::string>();
    effect.source = value_source_from_json(j.at("source"), where);
  } else if (type == "noop") {
    effect.kind = EffectKind::Noop;
  } else {
    throw LoadError("effect " + where + ": unknown type '" + type + "'");
  }
  return effect;
}

AxNode axnode_from_spec_json(const ordered_json& j) {
  AxNode node;
  node.bid = j.at("bid").get<std::string>();
  node.role = normalize_role(j.at("role").get<std::string>());
  node.name = j.value("name", std::string());
  if (j.contains("value")) node.value = j.at("value").get<std::string>();
  for (const auto& child : j.value("children", ordered_json::array())) {
    node.children.push_back(axnode_from_spec_json(child));
  }
  return node;
}

}  // namespace

SiteSpec site_spec_from_json_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("site spec: ") + e.what());
  }

  SiteSpec spec;
  spec.site.value = j.at("site").get<std::string>();
  if (spec.site.value.empty()) throw LoadError("site spec: field 'site' must be nonempty");
  if (!j.contains("step_limit")) throw LoadError("site spec: missing field 'step_limit'");
  long long limit = j.at("step_limit").get<long long>();
  if (limit < 1) throw LoadError("site spec: field 'step_limit' must be >= 1");
  spec.step_limit = static_cast<std::size_t>(limit);
  spec.start_page = j.at("start_page").get<std::string>();
  spec.variables = j.value("variables", std::map<std::string, std::string>{});

  for (const auto& [page_id, page_json] : j.at("pages").items()) {
    Page page;
    page.axtree = axnode_from_spec_json(page_json.at("axtree"));
    render_axtree(page.axtree);  // rejects duplicate bids
    ordered_json effects = page_json.value("effects", ordered_json::object());
    for (const auto& [bid, effect_json] : effects.items()) {
      page.effects[bid] = effect_from_json(effect_json, "pages." + page_id + ".effects." + bid);
    }
    spec.pages[page_id] = std::move(page);
  }

  if (!spec.pages.count(spec.start_page)) {
    throw LoadError("site spec: field 'start_page' names unknown page '" + spec.start_page + "'");
  }
  for (const auto& [page_id, page] : spec.pages) {
    for (const auto& [bid, effect] : page.effects) {
      std::string where = "pages." + page_id + ".effects." + bid;
      if (effect.kind == EffectKind::Navigate && !spec.pages.count(effect.target)) {
        throw LoadError("site spec: " + where + " targets unknown page '" + effect.target + "'");
      }
      if ((effect.kind == EffectKind::SetVar || effect.kind == EffectKind::AppendVar) &&
          !spec.variables.count(effect.target)) {
        throw LoadError("site spec: " + where + " references undeclared variable '" +
                        effect.target + "'");
      }
    }
  }
  return spec;
}

SiteSpec load_site(const std::string& path) {
  try {
    return site_spec_from_json_text(read_text_file(path));
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::string site_url(const SiteSpec& spec, const std::string& page) {
  return "sim://" + spec.site.value + "/" + page;
}

namespace {

Observation observe(const SiteSpec& spec, const EnvState& state, const std::string& goal,
                    std::optional<std::string> last_action) {
  Observation obs;
  obs.url = site_url(spec, state.current_page);
  obs.axtree_text = render_axtree(spec.pages.at(state.current_page).axtree);
  obs.goal = goal;
  obs.last_action = std::move(last_action);
  return obs;
}

}  // namespace

ResetResult reset(const SiteSpec& spec, const std::string& goal) {
  EnvState state;
  state.current_page = spec.start_page;
  state.variables = spec.variables;
  state.steps_taken = 0;
  return ResetResult{state, observe(spec, state, goal, std::nullopt)};
}

StepOutcome step(const EnvState& state, const Action& action, const SiteSpec& spec,
                 const std::string& goal, std::size_t step_limit) {
  StepOutcome out;
  out.state = state;
  out.state.steps_taken = state.steps_taken + 1;

  auto navigate_to = [&](const std::string& page) {
    out.state.previous_page = out.state.current_page;
    out.state.current_page = page;
  };
  auto apply_effect = [&](const std::string& bid, const std::string& fill_text) {
    const Page& page = spec.pages.at(state.current_page);
    auto it = page.effects.find(bid);
    if (it == page.effects.end()) {
      out.error = "unknown bid '" + bid + "' on page '" + state.current_page + "'";
      return;
    }
    const Effect& effect = it->second;
    switch (effect.kind) {
      case EffectKind::Navigate: navigate_to(effect.target); break;
      case EffectKind::SetVar:
      case EffectKind::AppendVar: {
        std::string value = effect.source.kind == ValueSourceKind::FromFillText
                                ? fill_text
                                : effect.source.literal;
        if (effect.kind == EffectKind::SetVar) {
          out.state.variables[effect.target] = value;
        } else {
          out.state.variables[effect.target] += value;
        }
        break;
      }
      case EffectKind::Noop: break;
    }
  };

  std::visit(
      [&](const auto& a) {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, Click>) {
          apply_effect(a.bid, "");
        } else if constexpr (std::is_same_v<T, Hover>) {
          apply_effect(a.bid, "");
        } else if constexpr (std::is_same_v<T, Fill>) {
          apply_effect(a.bid, a.text);
        } else if constexpr (std::is_same_v<T, SelectOption>) {
          apply_effect(a.bid, a.option);
        } else if constexpr (std::is_same_v<T, Goto>) {
          std::string prefix = "sim://" + spec.site.value + "/";
          if (starts_with(a.url, prefix) && spec.pages.count(a.url.substr(prefix.size()))) {
            navigate_to(a.url.substr(prefix.size()));
          } else {
            out.error = "goto: no page for url '" + a.url + "'";
          }
        } else if constexpr (std::is_same_v<T, GoBack>) {
          if (out.state.previous_page) {
            std::swap(out.state.current_page, *out.state.previous_page);
          }
          // no history: recorded no-op
        } else if constexpr (std::is_same_v<T, SendMsgToUser>) {
          out.state.messages.push_back(a.text);
          out.terminal = Terminal{TerminalKind::Message, a.text};
        } else {
          // scroll / keyboard_press / custom verbs: recorded no-ops
        }
      },
      action);

  if (!out.terminal && out.state.steps_taken >= step_limit) {
    out.terminal = Terminal{TerminalKind::StepLimit, {}};
  }
  out.observation = observe(spec, out.state, goal, render_action(action));
  return out;
}

bool check_goal(const EnvState& state, const GoalExprPtr& goal) {
  if (!goal) throw GoalEvalError("null goal expression");
  switch (goal->kind) {
    case GoalExpr::Kind::And:
      for (const auto& child : goal->children) {
        if (!check_goal(state, child)) return false;
      }
      return true;
    case GoalExpr::Kind::Or:
      for (const auto& child : goal->children) {
        if (check_goal(state, child)) return true;
      }
      return false;
    case GoalExpr::Kind::Not: return !check_goal(state, goal->children.at(0));
    case GoalExpr::Kind::VarEquals:
    case GoalExpr::Kind::VarContains: {
      auto it = state.variables.find(goal->name);
      if (it == state.variables.end()) {
        throw GoalEvalError("goal references undeclared variable '" + goal->name + "'");
      }
      if (goal->kind == GoalExpr::Kind::VarEquals) return it->second == goal->value;
      return it->second.find(goal->value) != std::string::npos;
    }
    case GoalExpr::Kind::OnPage: return state.current_page == goal->name;
    case GoalExpr::Kind::MessageContains:
      for (const std::string& message : state.messages) {
        if (message.find(goal->value) != std::string::npos) return true;
      }
      return false;
  }
  return false;
}

EnvState replay_trajectory(const SiteSpec& spec, const Trajectory& traj, const std::string& goal) {
  EnvState state = reset(spec, goal).state;
  for (const Step& s : traj.steps) {
    state = step(state, s.executed, spec, goal, spec.step_limit + traj.steps.size() + 1).state;
  }
  return state;
}

Trajectory run_episode(Backend& backend, const AgentTask& task, const SiteSpec& spec,
                       const TokenBudget& budget, const EpisodeOptions& options) {
  validate_budget(budget);
  if (options.max_retries < 1) throw ConfigError("run_episode: max_retries must be >= 1");
  if (options.gen.max_new_tokens > budget.max_new) {
    throw ConfigError("run_episode: gen.max_new_tokens exceeds budget.max_new");
  }
  std::size_t step_limit = options.step_limit_override
                               ? std::min(*options.step_limit_override, spec.step_limit)
                               : spec.step_limit;

  Trajectory traj;
  traj.id = options.trajectory_id;
  traj.task_id = task.id;

  for (int attempt = 1; attempt <= options.max_retries; ++attempt) {
    traj.attempt = attempt;
    traj.steps.clear();
    ResetResult fresh = reset(spec, task.intent);
    EnvState state = fresh.state;
    Observation obs = fresh.observation;

    for (;;) {
      std::string prompt = compose_observation_prompt(obs, budget);
      std::vector<ChatMessage> messages{{Role::System, options.system_prompt, {}},
                                        {Role::User, prompt, {}}};
      std::string reply;
      AgentResponse response;
      try {
        reply = backend.chat(messages, options.gen);
        response = parse_agent_response(reply);
      } catch (const RetryableError&) {
        break;  // abandon this attempt, retry from reset
      } catch (const NoActionError&) {
        break;  // unparseable reply counts as an episode failure
      }

      StepOutcome outcome = step(state, response.action, spec, task.intent, step_limit);
      Step record;
      record.index = traj.steps.size();
      record.observation = obs;
      record.response = response;
      record.executed = response.action;
      record.error = outcome.error;
      traj.steps.push_back(std::move(record));

      if (outcome.terminal) {
        traj.terminal = *outcome.terminal;
        return traj;
      }
      state = outcome.state;
      obs = outcome.observation;
    }
  }

  traj.terminal = Terminal{TerminalKind::EnvError, {}};
  return traj;
}

}  // namespace webtraj
