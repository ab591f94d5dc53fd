#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "webtraj/action.hpp"

namespace webtraj {

// Canonical data types shared by all pipeline stages. Each type has one
// JSONL serialization (one record per line, UTF-8, fields in declaration
// order, absent optionals omitted); those files are the inter-stage
// contract.

struct Persona {
  std::string id;
  std::string name;
  std::vector<std::string> skills;     // exactly 3
  std::vector<std::string> interests;  // exactly 3
  std::string description;
};

/// Identifier of a loaded site spec, e.g. "forum".
struct SiteId {
  std::string value;
  bool operator==(const SiteId&) const = default;
  auto operator<=>(const SiteId&) const = default;
};

struct TaskSpec {
  std::string id;
  SiteId site;
  std::optional<std::string> persona_id;
  std::string intent_template;
  std::map<std::string, std::string> bindings;
  std::string intent;
  std::vector<std::string> hints;
  std::size_t anchor_step = 0;
  std::string source_exploration_id;
};

/// The hint-stripped view handed to the agent. No fields exist to carry
/// hints, persona, or exploration content.
struct AgentTask {
  std::string id;
  SiteId site;
  std::string intent;
};

struct Observation {
  std::string url;
  std::string axtree_text;
  std::optional<std::string> screenshot_ref;
  std::string goal;
  std::optional<std::string> last_action;
};

struct Step {
  std::size_t index = 0;
  Observation observation;
  AgentResponse response;
  Action executed;
  std::optional<std::string> error;
};

enum class TerminalKind { Message, StepLimit, EnvError };

struct Terminal {
  TerminalKind kind = TerminalKind::EnvError;
  std::string message;  // set only for kind == Message
  bool operator==(const Terminal&) const = default;
};

struct Trajectory {
  std::string id;
  std::string task_id;
  std::vector<Step> steps;
  Terminal terminal;
  int attempt = 1;
};

enum class Optimality { CompleteFailure, Suboptimal, SomewhatOptimal, CompletelyOptimal };

/// Label text as it appears in judge prompts and replies.
std::string optimality_label(Optimality value);
std::optional<Optimality> optimality_from_label(std::string_view label);

struct Verdict {
  bool loop = false;
  bool side_effects = false;
  Optimality optimality = Optimality::CompleteFailure;
  bool success = false;  // true == "Successful"
  std::string raw_text;
  bool hints_used = false;
  std::uint64_t option_permutation_seed = 0;
};

struct StageCounts {
  std::size_t personas = 0;
  std::size_t explorations_scheduled = 0;
  std::size_t explorations_succeeded = 0;
  std::size_t tasks = 0;
  std::size_t trajectories = 0;
  std::size_t verdicts = 0;
  std::size_t retained = 0;
  std::size_t exported_examples = 0;
};

struct RunManifest {
  std::string config_digest;
  StageCounts counts;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
};

/// Checks the enumerated Trajectory invariants. An empty list means the
/// record is well formed; violations are data, not failures.
/// Rules: "step_limit_exceeded", "terminal_mismatch",
/// "noncontiguous_step_indices", "invalid_attempt".
std::vector<std::string> validate_trajectory(const Trajectory& traj, std::size_t step_limit);

/// Projects a TaskSpec to the agent-visible view. Throws ConfigError when
/// the intent is empty.
AgentTask to_agent_task(const TaskSpec& spec);

// --- JSONL serialization -------------------------------------------------

std::string serialize_persona(const Persona& p);
Persona deserialize_persona(const std::string& line);

std::string serialize_task_spec(const TaskSpec& t);
TaskSpec deserialize_task_spec(const std::string& line);

std::string serialize_agent_task(const AgentTask& t);
AgentTask deserialize_agent_task(const std::string& line);

std::string serialize_trajectory(const Trajectory& t);
Trajectory deserialize_trajectory(const std::string& line);

/// Verdicts travel with the id of the trajectory they judge.
struct JudgedRecord {
  std::string trajectory_id;
  Verdict verdict;
};

std::string serialize_judged(const JudgedRecord& r);
JudgedRecord deserialize_judged(const std::string& line);

std::string serialize_manifest(const RunManifest& m);
RunManifest deserialize_manifest(const std::string& text);

std::vector<std::string> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<std::string>& lines);

}  // namespace webtraj
