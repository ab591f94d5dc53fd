#include "webtraj/trace.hpp"

#include <fstream>

#include "json.hpp"
#include "webtraj/errors.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

std::string optimality_label(Optimality value) {
  switch (value) {
    case Optimality::CompleteFailure: return "Complete Failure";
    case Optimality::Suboptimal: return "Suboptimal";
    case Optimality::SomewhatOptimal: return "Somewhat Optimal";
    case Optimality::CompletelyOptimal: return "Completely Optimal";
  }
  return "Complete Failure";
}

std::optional<Optimality> optimality_from_label(std::string_view label) {
  for (Optimality v : {Optimality::CompleteFailure, Optimality::Suboptimal,
                       Optimality::SomewhatOptimal, Optimality::CompletelyOptimal}) {
    if (optimality_label(v) == label) return v;
  }
  return std::nullopt;
}

std::vector<std::string> validate_trajectory(const Trajectory& traj, std::size_t step_limit) {
  std::vector<std::string> violations;
  if (traj.steps.size() > step_limit) violations.push_back("step_limit_exceeded");

  bool last_is_message = !traj.steps.empty() && is_send_msg(traj.steps.back().executed);
  bool terminal_is_message = traj.terminal.kind == TerminalKind::Message;
  if (terminal_is_message != last_is_message) violations.push_back("terminal_mismatch");

  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    if (traj.steps[i].index != i) {
      violations.push_back("noncontiguous_step_indices");
      break;
    }
  }
  if (traj.attempt < 1) violations.push_back("invalid_attempt");
  return violations;
}

AgentTask to_agent_task(const TaskSpec& spec) {
  if (spec.intent.empty()) throw ConfigError("task spec '" + spec.id + "' has an empty intent");
  return AgentTask{spec.id, spec.site, spec.intent};
}

namespace {

ordered_json observation_to_json(const Observation& o) {
  ordered_json j;
  j["url"] = o.url;
  j["axtree_text"] = o.axtree_text;
  if (o.screenshot_ref) j["screenshot_ref"] = *o.screenshot_ref;
  j["goal"] = o.goal;
  if (o.last_action) j["last_action"] = *o.last_action;
  return j;
}

Observation observation_from_json(const ordered_json& j) {
  Observation o;
  o.url = j.at("url").get<std::string>();
  o.axtree_text = j.at("axtree_text").get<std::string>();
  if (j.contains("screenshot_ref")) o.screenshot_ref = j.at("screenshot_ref").get<std::string>();
  o.goal = j.at("goal").get<std::string>();
  if (j.contains("last_action")) o.last_action = j.at("last_action").get<std::string>();
  return o;
}

ordered_json response_to_json(const AgentResponse& r) {
  ordered_json j;
  if (r.thought) j["thought"] = *r.thought;
  if (r.think) j["think"] = *r.think;
  j["action"] = render_action(r.action);
  j["raw"] = r.raw;
  return j;
}

AgentResponse response_from_json(const ordered_json& j) {
  if (!j.contains("action")) throw LoadError("step response is missing its action");
  AgentResponse r{std::nullopt, std::nullopt, parse_action(j.at("action").get<std::string>()),
                  j.value("raw", std::string())};
  if (j.contains("thought")) r.thought = j.at("thought").get<std::string>();
  if (j.contains("think")) r.think = j.at("think").get<std::string>();
  return r;
}

ordered_json step_to_json(const Step& s) {
  ordered_json j;
  j["index"] = s.index;
  j["observation"] = observation_to_json(s.observation);
  j["response"] = response_to_json(s.response);
  j["executed"] = render_action(s.executed);
  if (s.error) j["error"] = *s.error;
  return j;
}

Step step_from_json(const ordered_json& j) {
  Step s;
  s.index = j.at("index").get<std::size_t>();
  s.observation = observation_from_json(j.at("observation"));
  if (!j.contains("response")) throw LoadError("trajectory step is missing its response");
  s.response = response_from_json(j.at("response"));
  s.executed = parse_action(j.at("executed").get<std::string>());
  if (j.contains("error")) s.error = j.at("error").get<std::string>();
  return s;
}

ordered_json terminal_to_json(const Terminal& t) {
  ordered_json j;
  switch (t.kind) {
    case TerminalKind::Message:
      j["kind"] = "message";
      j["text"] = t.message;
      break;
    case TerminalKind::StepLimit: j["kind"] = "step_limit"; break;
    case TerminalKind::EnvError: j["kind"] = "env_error"; break;
  }
  return j;
}

Terminal terminal_from_json(const ordered_json& j) {
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "message") return Terminal{TerminalKind::Message, j.value("text", std::string())};
  if (kind == "step_limit") return Terminal{TerminalKind::StepLimit, {}};
  if (kind == "env_error") return Terminal{TerminalKind::EnvError, {}};
  throw LoadError("unknown terminal kind '" + kind + "'");
}

ordered_json parse_line(const std::string& line) {
  try {
    return ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad JSONL record: ") + e.what());
  }
}

}  // namespace

std::string serialize_persona(const Persona& p) {
  ordered_json j;
  j["id"] = p.id;
  j["name"] = p.name;
  j["skills"] = p.skills;
  j["interests"] = p.interests;
  j["description"] = p.description;
  return j.dump();
}

Persona deserialize_persona(const std::string& line) {
  ordered_json j = parse_line(line);
  Persona p;
  p.id = j.at("id").get<std::string>();
  p.name = j.at("name").get<std::string>();
  p.skills = j.at("skills").get<std::vector<std::string>>();
  p.interests = j.at("interests").get<std::vector<std::string>>();
  p.description = j.at("description").get<std::string>();
  if (p.skills.size() != 3 || p.interests.size() != 3) {
    throw LoadError("persona '" + p.id + "' must carry exactly 3 skills and 3 interests");
  }
  return p;
}

std::string serialize_task_spec(const TaskSpec& t) {
  ordered_json j;
  j["id"] = t.id;
  j["site"] = t.site.value;
  if (t.persona_id) j["persona_id"] = *t.persona_id;
  j["intent_template"] = t.intent_template;
  j["bindings"] = t.bindings;
  j["intent"] = t.intent;
  j["hints"] = t.hints;
  j["anchor_step"] = t.anchor_step;
  j["source_exploration_id"] = t.source_exploration_id;
  return j.dump();
}

TaskSpec deserialize_task_spec(const std::string& line) {
  ordered_json j = parse_line(line);
  TaskSpec t;
  t.id = j.at("id").get<std::string>();
  t.site.value = j.at("site").get<std::string>();
  if (j.contains("persona_id")) t.persona_id = j.at("persona_id").get<std::string>();
  t.intent_template = j.at("intent_template").get<std::string>();
  t.bindings = j.at("bindings").get<std::map<std::string, std::string>>();
  t.intent = j.at("intent").get<std::string>();
  t.hints = j.at("hints").get<std::vector<std::string>>();
  t.anchor_step = j.at("anchor_step").get<std::size_t>();
  t.source_exploration_id = j.at("source_exploration_id").get<std::string>();
  return t;
}

std::string serialize_agent_task(const AgentTask& t) {
  ordered_json j;
  j["id"] = t.id;
  j["site"] = t.site.value;
  j["intent"] = t.intent;
  return j.dump();
}

AgentTask deserialize_agent_task(const std::string& line) {
  ordered_json j = parse_line(line);
  return AgentTask{j.at("id").get<std::string>(), SiteId{j.at("site").get<std::string>()},
                   j.at("intent").get<std::string>()};
}

std::string serialize_trajectory(const Trajectory& t) {
  ordered_json j;
  j["id"] = t.id;
  j["task_id"] = t.task_id;
  ordered_json steps = ordered_json::array();
  for (const Step& s : t.steps) steps.push_back(step_to_json(s));
  j["steps"] = std::move(steps);
  j["terminal"] = terminal_to_json(t.terminal);
  j["attempt"] = t.attempt;
  return j.dump();
}

Trajectory deserialize_trajectory(const std::string& line) {
  ordered_json j = parse_line(line);
  Trajectory t;
  t.id = j.at("id").get<std::string>();
  t.task_id = j.at("task_id").get<std::string>();
  for (const auto& s : j.at("steps")) t.steps.push_back(step_from_json(s));
  t.terminal = terminal_from_json(j.at("terminal"));
  t.attempt = j.at("attempt").get<int>();
  return t;
}

std::string serialize_judged(const JudgedRecord& r) {
  ordered_json j;
  j["trajectory_id"] = r.trajectory_id;
  j["loop"] = r.verdict.loop ? "yes" : "no";
  j["side_effects"] = r.verdict.side_effects ? "yes" : "no";
  j["optimality"] = optimality_label(r.verdict.optimality);
  j["success"] = r.verdict.success ? "Successful" : "Unsuccessful";
  j["raw_text"] = r.verdict.raw_text;
  j["hints_used"] = r.verdict.hints_used;
  j["option_permutation_seed"] = r.verdict.option_permutation_seed;
  return j.dump();
}

JudgedRecord deserialize_judged(const std::string& line) {
  ordered_json j = parse_line(line);
  JudgedRecord r;
  r.trajectory_id = j.at("trajectory_id").get<std::string>();
  r.verdict.loop = j.at("loop").get<std::string>() == "yes";
  r.verdict.side_effects = j.at("side_effects").get<std::string>() == "yes";
  auto opt = optimality_from_label(j.at("optimality").get<std::string>());
  if (!opt) throw LoadError("unknown optimality label in verdict record");
  r.verdict.optimality = *opt;
  r.verdict.success = j.at("success").get<std::string>() == "Successful";
  r.verdict.raw_text = j.at("raw_text").get<std::string>();
  r.verdict.hints_used = j.at("hints_used").get<bool>();
  r.verdict.option_permutation_seed = j.at("option_permutation_seed").get<std::uint64_t>();
  return r;
}

std::string serialize_manifest(const RunManifest& m) {
  ordered_json counts;
  counts["personas"] = m.counts.personas;
  counts["explorations_scheduled"] = m.counts.explorations_scheduled;
  counts["explorations_succeeded"] = m.counts.explorations_succeeded;
  counts["tasks"] = m.counts.tasks;
  counts["trajectories"] = m.counts.trajectories;
  counts["verdicts"] = m.counts.verdicts;
  counts["retained"] = m.counts.retained;
  counts["exported_examples"] = m.counts.exported_examples;
  ordered_json j;
  j["config_digest"] = m.config_digest;
  j["counts"] = std::move(counts);
  j["seed"] = m.seed;
  j["timestamps"] = ordered_json{{"started", m.started_at}, {"finished", m.finished_at}};
  return j.dump(2) + "\n";
}

RunManifest deserialize_manifest(const std::string& text) {
  ordered_json j = parse_line(text);
  RunManifest m;
  m.config_digest = j.at("config_digest").get<std::string>();
  const auto& c = j.at("counts");
  m.counts.personas = c.at("personas").get<std::size_t>();
  m.counts.explorations_scheduled = c.at("explorations_scheduled").get<std::size_t>();
  m.counts.explorations_succeeded = c.at("explorations_succeeded").get<std::size_t>();
  m.counts.tasks = c.at("tasks").get<std::size_t>();
  m.counts.trajectories = c.at("trajectories").get<std::size_t>();
  m.counts.verdicts = c.at("verdicts").get<std::size_t>();
  m.counts.retained = c.at("retained").get<std::size_t>();
  m.counts.exported_examples = c.at("exported_examples").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.started_at = j.at("timestamps").at("started").get<std::string>();
  m.finished_at = j.at("timestamps").at("finished").get<std::string>();
  return m;
}

std::vector<std::string> read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open JSONL file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_jsonl(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write JSONL file: " + path);
  for (const std::string& line : lines) out << line << '\n';
  if (!out) throw LoadError("write failed: " + path);
}

}  // namespace webtraj
