#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "webtraj/axtree.hpp"
#include "webtraj/backend.hpp"
#include "webtraj/trace.hpp"

namespace webtraj {

// Deterministic stand-in for the live web environments: declarative pages,
// a flat variable store, and programmatic goal predicates.

enum class ValueSourceKind { Literal, FromFillText };

struct ValueSource {
  ValueSourceKind kind = ValueSourceKind::Literal;
  std::string literal;
};

enum class EffectKind { Navigate, SetVar, AppendVar, Noop };

struct Effect {
  EffectKind kind = EffectKind::Noop;
  std::string target;  // page for Navigate, variable name otherwise
  ValueSource source;
};

struct Page {
  AxNode axtree;
  std::map<std::string, Effect> effects;  // keyed by bid
};

struct SiteSpec {
  SiteId site;
  std::size_t step_limit = 1;
  std::map<std::string, Page> pages;
  std::string start_page;
  std::map<std::string, std::string> variables;
};

// Boolean goal predicates over the terminal environment state.
struct GoalExpr;
using GoalExprPtr = std::shared_ptr<const GoalExpr>;

struct GoalExpr {
  enum class Kind { And, Or, Not, VarEquals, VarContains, OnPage, MessageContains };
  Kind kind;
  std::vector<GoalExprPtr> children;  // And/Or/Not
  std::string name;                   // variable or page id
  std::string value;                  // comparison value / substring
};

GoalExprPtr goal_and(std::vector<GoalExprPtr> children);
GoalExprPtr goal_or(std::vector<GoalExprPtr> children);
GoalExprPtr goal_not(GoalExprPtr child);
GoalExprPtr goal_var_equals(std::string name, std::string value);
GoalExprPtr goal_var_contains(std::string name, std::string substr);
GoalExprPtr goal_on_page(std::string page);
GoalExprPtr goal_message_contains(std::string substr);
/// A goal no state can satisfy (infeasible-task category).
GoalExprPtr goal_never();

struct EnvState {
  std::string current_page;
  std::map<std::string, std::string> variables;
  std::vector<std::string> messages;
  std::size_t steps_taken = 0;
  std::optional<std::string> previous_page;  // depth-1 history for go_back
};

/// Loads and validates a site spec JSON document. Schema violations raise
/// LoadError naming the offending field.
SiteSpec load_site(const std::string& path);
SiteSpec site_spec_from_json_text(const std::string& text);
std::string site_url(const SiteSpec& spec, const std::string& page);

struct ResetResult {
  EnvState state;
  Observation observation;
};

/// Fresh state at the start page with initial variables; the observation is
/// rendered from that page with the given goal text.
ResetResult reset(const SiteSpec& spec, const std::string& goal);

struct StepOutcome {
  EnvState state;
  Observation observation;
  std::optional<std::string> error;     // recorded step error; episode continues
  std::optional<Terminal> terminal;
};

/// Applies one action. click/hover/select_option/fill trigger the page's
/// effect for that bid (fill text feeds from_fill_text sources); goto
/// navigates sim:// urls; go_back uses depth-1 history; scroll and
/// keyboard_press are recorded no-ops; send_msg_to_user terminates with the
/// message. Unknown bids become recorded step errors with the observation
/// unchanged. Hitting the step limit without a message terminates with
/// step_limit.
StepOutcome step(const EnvState& state, const Action& action, const SiteSpec& spec,
                 const std::string& goal, std::size_t step_limit);

/// Evaluates a goal expression against a state. References to variables the
/// site never declared raise GoalEvalError.
bool check_goal(const EnvState& state, const GoalExprPtr& goal);

class GoalEvalError : public Error {
 public:
  using Error::Error;
};

/// Re-applies a trajectory's executed actions from reset; used by goal
/// oracles to recover the terminal state.
EnvState replay_trajectory(const SiteSpec& spec, const Trajectory& traj, const std::string& goal);

struct EpisodeOptions {
  std::string trajectory_id;
  std::string system_prompt;
  GenParams gen;
  int max_retries = 10;
  /// Caps episode length below the site's own limit when set (explorations
  /// run shorter than task rollouts).
  std::optional<std::size_t> step_limit_override;
};

/// Runs one task episode: compose prompt -> chat -> parse -> step until a
/// terminal. Backend transport/protocol failures and unparseable agent
/// replies abandon the attempt, reset the environment, and retry; after
/// max_retries attempts the trajectory terminates with env_error.
Trajectory run_episode(Backend& backend, const AgentTask& task, const SiteSpec& spec,
                       const TokenBudget& budget, const EpisodeOptions& options);

}  // namespace webtraj
