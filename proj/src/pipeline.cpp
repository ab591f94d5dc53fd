#include "webtraj/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <set>

#include "json.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

namespace {

const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "output_dir",        "sites",
      "k_tasks_per_exploration", "retries",
      "personas.mode",     "personas.count",
      "backend.mode",      "backend.endpoint",
      "backend.script",    "backend.model",
      "backend.workers",   "backend.temperature",
      "backend.api_key_env",
      "budget.max_total",  "budget.max_prompt",
      "budget.max_new",
      "seeds.pipeline",    "seeds.judge_options",
      "exploration.step_limit",
      "prompts.dir",
  };
  return keys;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> values;
  std::string section;
  std::size_t line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    }
    std::string full = section.empty() ? key : section + "." + key;
    values[full] = value;
  }
  return values;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= value.size(); ++i) {
    if (i == value.size() || value[i] == ',') {
      std::string item = trim(value.substr(start, i - start));
      if (!item.empty()) items.push_back(std::move(item));
      start = i + 1;
    }
  }
  return items;
}

std::uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    return std::stoull(value);
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + value +
                      "'");
  }
}

std::string iso8601_now() {
  std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> values = parse_key_values(text);
  for (const std::string& override_spec : overrides) {
    std::size_t eq = override_spec.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + override_spec + "'");
    }
    values[trim(override_spec.substr(0, eq))] = trim(override_spec.substr(eq + 1));
  }
  for (const auto& [key, value] : values) {
    if (!known_config_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = values.find(key);
    if (it == values.end()) return std::nullopt;
    return it->second;
  };

  PipelineConfig config;
  if (auto v = get("output_dir")) config.output_dir = *v;
  if (auto v = get("sites")) config.sites = split_list(*v);
  if (auto v = get("k_tasks_per_exploration")) {
    config.k_tasks_per_exploration = parse_u64(*v, "k_tasks_per_exploration");
  }
  if (auto v = get("retries")) config.retries = static_cast<int>(parse_u64(*v, "retries"));
  if (auto v = get("personas.mode")) config.personas.mode = *v;
  if (auto v = get("personas.count")) config.personas.count = parse_u64(*v, "personas.count");
  if (auto v = get("backend.mode")) config.backend.mode = *v;
  if (auto v = get("backend.endpoint")) config.backend.endpoint = *v;
  if (auto v = get("backend.script")) config.backend.script = *v;
  if (auto v = get("backend.model")) config.backend.model = *v;
  if (auto v = get("backend.workers")) {
    config.backend.workers = static_cast<int>(parse_u64(*v, "backend.workers"));
  }
  if (auto v = get("backend.temperature")) {
    try {
      config.backend.temperature = std::stod(*v);
    } catch (...) {
      throw ConfigError("config key 'backend.temperature': expected a number");
    }
  }
  if (auto v = get("backend.api_key_env")) config.backend.api_key_env = *v;
  if (auto v = get("budget.max_total")) config.budget.max_total = parse_u64(*v, "budget.max_total");
  if (auto v = get("budget.max_prompt")) {
    config.budget.max_prompt = parse_u64(*v, "budget.max_prompt");
  }
  if (auto v = get("budget.max_new")) config.budget.max_new = parse_u64(*v, "budget.max_new");
  if (auto v = get("seeds.pipeline")) config.seeds.pipeline = parse_u64(*v, "seeds.pipeline");
  if (auto v = get("seeds.judge_options")) {
    config.seeds.judge_options = parse_u64(*v, "seeds.judge_options");
  }
  if (auto v = get("exploration.step_limit")) {
    config.exploration_step_limit = parse_u64(*v, "exploration.step_limit");
  }
  if (auto v = get("prompts.dir")) config.prompts_dir = *v;

  if (config.personas.count < 1) throw ConfigError("personas.count must be >= 1");
  if (config.backend.workers < 1) throw ConfigError("backend.workers must be >= 1");
  if (config.retries < 1) throw ConfigError("retries must be >= 1");
  if (config.personas.mode != "builtin" && config.personas.mode != "backend") {
    throw ConfigError("personas.mode must be builtin or backend");
  }
  if (config.backend.mode != "scripted" && config.backend.mode != "live") {
    throw ConfigError("backend.mode must be scripted or live");
  }
  if (config.backend.mode == "scripted" && config.backend.script.empty()) {
    throw ConfigError("scripted backend requires backend.script");
  }
  if (config.backend.mode == "live" && config.backend.endpoint.empty()) {
    throw ConfigError("live backend requires backend.endpoint");
  }
  validate_budget(config.budget);
  for (const std::string& path : config.sites) {
    if (!std::filesystem::exists(path)) {
      throw ConfigError("site spec path does not exist: " + path);
    }
  }
  if (config.backend.mode == "scripted" && !std::filesystem::exists(config.backend.script)) {
    throw ConfigError("backend.script path does not exist: " + config.backend.script);
  }
  return config;
}

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, overrides);
}

std::string config_digest(const PipelineConfig& config) {
  std::string canon;
  for (const std::string& site : config.sites) canon += "site=" + site + ";";
  canon += "pmode=" + config.personas.mode + ";pcount=" + std::to_string(config.personas.count);
  canon += ";k=" + std::to_string(config.k_tasks_per_exploration);
  // Worker count and output_dir stay out: neither affects artifact content.
  canon += ";bmode=" + config.backend.mode + ";endpoint=" + config.backend.endpoint;
  canon += ";script=" + config.backend.script + ";model=" + config.backend.model;
  canon += ";temp=" + std::to_string(config.backend.temperature);
  canon += ";budget=" + std::to_string(config.budget.max_total) + "/" +
           std::to_string(config.budget.max_prompt) + "/" + std::to_string(config.budget.max_new);
  canon += ";seed=" + std::to_string(config.seeds.pipeline) + "/" +
           std::to_string(config.seeds.judge_options);
  canon += ";retries=" + std::to_string(config.retries);
  canon += ";explimit=" + std::to_string(config.exploration_step_limit);
  canon += ";prompts=" + config.prompts_dir;
  return hex64(fnv1a64(canon));
}

PlanReport plan(const PipelineConfig& config) {
  PlanReport report;
  report.personas = config.personas.count;
  report.explorations = config.personas.count * config.sites.size();
  report.tasks = report.explorations * config.k_tasks_per_exploration;
  return report;
}

std::unique_ptr<Backend> make_backend(const PipelineConfig& config) {
  if (config.backend.mode == "scripted") {
    return std::make_unique<ScriptedBackend>(load_script(config.backend.script));
  }
  LiveBackendConfig live;
  live.endpoint = config.backend.endpoint;
  live.model = config.backend.model;
  live.api_key_env = config.backend.api_key_env;
  live.max_prompt_tokens = config.budget.max_prompt;
  return std::make_unique<LiveBackend>(live);
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  prompts_ = config_.prompts_dir.empty() ? default_prompt_assets()
                                         : load_prompt_assets(config_.prompts_dir);
  // The effective digest covers the loaded prompt texts, so editing an
  // asset invalidates resumption and is visible in the manifest.
  std::string prompt_blob = prompts_.agent_system + "\x1f" + prompts_.judge_system + "\x1f" +
                            prompts_.exploration_template + "\x1f" +
                            prompts_.persona_generation + "\x1f" +
                            prompts_.instructions.abstract_high_level + "\x1f" +
                            prompts_.instructions.creative + "\x1f" +
                            prompts_.instructions.template_based;
  effective_digest_ = hex64(fnv1a64(config_digest(config_) + "|" + hex64(fnv1a64(prompt_blob))));
  for (const std::string& path : config_.sites) {
    SiteSpec spec = load_site(path);
    if (site_specs_.count(spec.site.value)) {
      throw ConfigError("duplicate site id '" + spec.site.value + "' across site specs");
    }
    site_order_.push_back(spec.site.value);
    site_specs_[spec.site.value] = std::move(spec);
  }
  backend_ = make_backend(config_);
  std::filesystem::create_directories(config_.output_dir);

  std::string digest_path = artifact_path("digests.json");
  if (std::filesystem::exists(digest_path)) {
    try {
      ordered_json j = ordered_json::parse(read_text_file(digest_path));
      for (const auto& [stage, digest] : j.items()) {
        stored_digests_[stage] = digest.get<std::string>();
      }
    } catch (...) {
      stored_digests_.clear();  // stale digest file: recompute everything
    }
  }
}

std::string Pipeline::artifact_path(const std::string& name) const {
  return (std::filesystem::path(config_.output_dir) / name).string();
}

std::string Pipeline::stage_digest(const std::string& stage,
                                   const std::vector<std::string>& config_parts,
                                   const std::vector<std::string>& input_files) const {
  std::string canon = stage;
  for (const std::string& part : config_parts) canon += "|" + part;
  for (const std::string& file : input_files) {
    canon += "|" + file + ":";
    canon += std::filesystem::exists(file) ? hex64(fnv1a64(read_text_file(file))) : "absent";
  }
  return hex64(fnv1a64(canon));
}

bool Pipeline::stage_is_fresh(const std::string& stage, const std::string& digest) const {
  auto it = stored_digests_.find(stage);
  return it != stored_digests_.end() && it->second == digest &&
         std::filesystem::exists(artifact_path(stage + ".jsonl"));
}

void Pipeline::record_stage_digest(const std::string& stage, const std::string& digest) {
  stored_digests_[stage] = digest;
  ordered_json j;
  for (const auto& [name, value] : stored_digests_) j[name] = value;
  write_text_file(artifact_path("digests.json"), j.dump(2) + "\n");
}

// --- stages ---------------------------------------------------------------

std::vector<Persona> Pipeline::stage_personas() {
  std::vector<Persona> personas;
  if (config_.personas.mode == "builtin") {
    personas = generate_personas_builtin(config_.personas.count, config_.seeds.pipeline);
  } else {
    PersonaGenOptions options;
    options.prompt = prompts_.persona_generation;
    options.gen.temperature = config_.backend.temperature;
    options.gen.max_new_tokens = config_.budget.max_new;
    options.retries = config_.retries;
    personas = generate_personas(config_.personas.count, *backend_, options);
  }
  std::vector<std::string> lines;
  lines.reserve(personas.size());
  for (const Persona& p : personas) lines.push_back(serialize_persona(p));
  write_jsonl(artifact_path("personas.jsonl"), lines);
  return personas;
}

std::vector<ExplorationTrace> Pipeline::stage_explore() {
  std::vector<Persona> personas;
  for (const std::string& line : read_jsonl(artifact_path("personas.jsonl"))) {
    personas.push_back(deserialize_persona(line));
  }

  struct Job {
    const Persona* persona;
    const SiteSpec* spec;
    std::string id;
  };
  std::vector<Job> schedule;
  std::size_t counter = 1;
  for (const Persona& persona : personas) {
    for (const std::string& site : site_order_) {
      schedule.push_back({&persona, &site_specs_.at(site), stage_id("exploration", counter++)});
    }
  }

  std::vector<std::function<ExplorationTrace()>> jobs;
  jobs.reserve(schedule.size());
  for (const Job& job : schedule) {
    jobs.push_back([this, job] {
      ExploreOptions options;
      options.exploration_id = job.id;
      options.exploration_template = prompts_.exploration_template;
      options.agent_system_prompt = prompts_.agent_system;
      options.gen.temperature = config_.backend.temperature;
      options.gen.max_new_tokens = config_.budget.max_new;
      options.max_retries = config_.retries;
      options.step_limit = config_.exploration_step_limit;
      return explore(*job.persona, *job.spec, *backend_, config_.budget, options);
    });
  }

  auto results = run_parallel(jobs, config_.backend.workers);
  std::vector<ExplorationTrace> traces;
  std::vector<std::string> lines;
  std::size_t env_errors = 0;
  for (const auto& result : results) {
    if (!result.ok()) {
      ++issues_.job_errors;
      continue;
    }
    if (result.value->trajectory.terminal.kind == TerminalKind::EnvError) ++env_errors;
    lines.push_back(serialize_exploration(*result.value));
    traces.push_back(*result.value);
  }
  bool all_failed = !traces.empty() && env_errors == traces.size();
  if ((!schedule.empty() && traces.empty()) || all_failed) stage_exhausted_ = true;
  write_jsonl(artifact_path("explorations.jsonl"), lines);
  return traces;
}

std::vector<TaskSpec> Pipeline::stage_tasks() {
  std::map<std::string, Persona> personas;
  for (const std::string& line : read_jsonl(artifact_path("personas.jsonl"))) {
    Persona p = deserialize_persona(line);
    personas[p.id] = std::move(p);
  }
  std::vector<ExplorationTrace> traces;
  for (const std::string& line : read_jsonl(artifact_path("explorations.jsonl"))) {
    ExplorationTrace t = deserialize_exploration(line);
    if (t.succeeded) traces.push_back(std::move(t));
  }

  std::vector<std::function<TaskSynthesisResult()>> jobs;
  jobs.reserve(traces.size());
  for (const ExplorationTrace& trace : traces) {
    const Persona& persona = personas.at(trace.persona_id);
    jobs.push_back([this, &trace, &persona] {
      SynthesizeOptions options;
      options.gen.temperature = config_.backend.temperature;
      options.gen.max_new_tokens = config_.budget.max_new;
      options.retries = config_.retries;
      return synthesize_tasks(trace, persona, prompts_.instructions, *backend_,
                              config_.k_tasks_per_exploration, options);
    });
  }

  auto results = run_parallel(jobs, config_.backend.workers);
  std::vector<TaskSpec> tasks;
  for (const auto& result : results) {
    if (!result.ok()) {
      ++issues_.job_errors;
      continue;
    }
    issues_.synthesis_errors += result.value->anchor_errors.size();
    for (const TaskSpec& spec : result.value->tasks) tasks.push_back(spec);
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) tasks[i].id = stage_id("task", i + 1);

  if (!traces.empty() && tasks.empty()) stage_exhausted_ = true;
  std::vector<std::string> lines;
  lines.reserve(tasks.size());
  for (const TaskSpec& spec : tasks) lines.push_back(serialize_task_spec(spec));
  write_jsonl(artifact_path("tasks.jsonl"), lines);
  return tasks;
}

std::vector<Trajectory> Pipeline::stage_rollout() {
  std::vector<TaskSpec> tasks;
  for (const std::string& line : read_jsonl(artifact_path("tasks.jsonl"))) {
    tasks.push_back(deserialize_task_spec(line));
  }

  std::vector<std::function<Trajectory()>> jobs;
  jobs.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskSpec& spec = tasks[i];
    std::string id = stage_id("trajectory", i + 1);
    jobs.push_back([this, &spec, id] {
      const SiteSpec& site = site_specs_.at(spec.site.value);
      EpisodeOptions options;
      options.trajectory_id = id;
      options.system_prompt = prompts_.agent_system;
      options.gen.temperature = config_.backend.temperature;
      options.gen.max_new_tokens = config_.budget.max_new;
      options.max_retries = config_.retries;
      // The agent is hint-blind: only the projected task crosses this call.
      return run_episode(*backend_, to_agent_task(spec), site, config_.budget, options);
    });
  }

  auto results = run_parallel(jobs, config_.backend.workers);
  std::vector<Trajectory> trajectories;
  std::vector<std::string> lines;
  for (const auto& result : results) {
    if (!result.ok()) {
      ++issues_.job_errors;
      continue;
    }
    if (result.value->terminal.kind == TerminalKind::EnvError) ++issues_.env_error_rollouts;
    lines.push_back(serialize_trajectory(*result.value));
    trajectories.push_back(*result.value);
  }
  bool all_env_error =
      !trajectories.empty() && issues_.env_error_rollouts == trajectories.size();
  if ((!tasks.empty() && trajectories.empty()) || all_env_error) stage_exhausted_ = true;
  write_jsonl(artifact_path("trajectories.jsonl"), lines);
  return trajectories;
}

std::vector<JudgedRecord> Pipeline::stage_judge(bool include_hints) {
  std::map<std::string, TaskSpec> tasks;
  for (const std::string& line : read_jsonl(artifact_path("tasks.jsonl"))) {
    TaskSpec spec = deserialize_task_spec(line);
    tasks[spec.id] = std::move(spec);
  }
  std::vector<Trajectory> trajectories;
  for (const std::string& line : read_jsonl(artifact_path("trajectories.jsonl"))) {
    Trajectory traj = deserialize_trajectory(line);
    if (traj.terminal.kind != TerminalKind::EnvError) trajectories.push_back(std::move(traj));
  }

  std::vector<std::function<JudgedRecord()>> jobs;
  jobs.reserve(trajectories.size());
  for (const Trajectory& traj : trajectories) {
    jobs.push_back([this, &traj, &tasks, include_hints] {
      JudgeOptions options;
      options.include_hints = include_hints;
      options.option_seed = config_.seeds.judge_options;
      JudgeRunOptions run;
      run.system_prompt = prompts_.judge_system;
      run.gen.temperature = config_.backend.temperature;
      run.gen.max_new_tokens = config_.budget.max_new;
      run.retries = config_.retries;
      Verdict verdict =
          judge_trajectory(*backend_, traj, tasks.at(traj.task_id), options, run);
      return JudgedRecord{traj.id, std::move(verdict)};
    });
  }

  auto results = run_parallel(jobs, config_.backend.workers);
  std::vector<JudgedRecord> records;
  std::vector<std::string> lines;
  for (const auto& result : results) {
    if (!result.ok()) {
      ++issues_.unjudged;
      continue;
    }
    lines.push_back(serialize_judged(*result.value));
    records.push_back(*result.value);
  }
  if (!trajectories.empty() && records.empty()) stage_exhausted_ = true;
  write_jsonl(artifact_path(include_hints ? "verdicts.jsonl" : "verdicts_nohints.jsonl"), lines);
  return records;
}

std::vector<Trajectory> Pipeline::stage_filter() {
  std::map<std::string, Verdict> verdicts;
  for (const std::string& line : read_jsonl(artifact_path("verdicts.jsonl"))) {
    JudgedRecord record = deserialize_judged(line);
    verdicts[record.trajectory_id] = record.verdict;
  }

  std::vector<std::pair<Trajectory, Verdict>> judged;
  for (const std::string& line : read_jsonl(artifact_path("trajectories.jsonl"))) {
    Trajectory traj = deserialize_trajectory(line);
    auto it = verdicts.find(traj.id);
    if (it != verdicts.end()) judged.emplace_back(std::move(traj), it->second);
  }

  std::vector<Trajectory> retained;
  std::vector<std::string> lines;
  for (auto& [traj, verdict] : filter_successful(judged)) {
    lines.push_back(serialize_trajectory(traj));
    retained.push_back(std::move(traj));
  }
  write_jsonl(artifact_path("retained.jsonl"), lines);
  return retained;
}

std::vector<SftConversation> Pipeline::build_retained_conversations() const {
  std::map<std::string, TaskSpec> tasks;
  for (const std::string& line : read_jsonl(artifact_path("tasks.jsonl"))) {
    TaskSpec spec = deserialize_task_spec(line);
    tasks[spec.id] = std::move(spec);
  }

  std::vector<SftConversation> convs;
  std::size_t counter = 1;
  for (const std::string& line : read_jsonl(artifact_path("retained.jsonl"))) {
    Trajectory traj = deserialize_trajectory(line);
    SftConversation conv = to_sft_conversation(traj, to_agent_task(tasks.at(traj.task_id)),
                                               prompts_.agent_system, config_.budget);
    conv.id = stage_id("sft", counter++);
    convs.push_back(std::move(conv));
  }
  return convs;
}

ExportCounts Pipeline::stage_export() {
  std::vector<SftConversation> convs = build_retained_conversations();
  ExportCounts counts = export_jsonl(convs, artifact_path("sft.jsonl"), ExportMode::Multiturn);
  write_text_file(artifact_path("stats.json"), serialize_stats(compute_stats(convs)));
  return counts;
}

ExportCounts Pipeline::stage_export_per_step() {
  return export_jsonl(build_retained_conversations(), artifact_path("sft_per_step.jsonl"),
                      ExportMode::PerStep);
}

DataStats Pipeline::stage_stats() {
  std::vector<SftConversation> convs = load_conversations("sft.jsonl");
  DataStats stats = compute_stats(convs);
  write_text_file(artifact_path("stats.json"), serialize_stats(stats));
  return stats;
}

std::vector<SftConversation> Pipeline::load_conversations(const std::string& name) const {
  std::vector<SftConversation> convs;
  for (const std::string& line : read_jsonl(artifact_path(name))) {
    convs.push_back(deserialize_sft_conversation(line));
  }
  return convs;
}

// --- full run ----------------------------------------------------------------

PipelineResult Pipeline::run() {
  RunManifest manifest;
  manifest.config_digest = effective_digest_;
  manifest.seed = config_.seeds.pipeline;
  manifest.started_at = iso8601_now();

  std::vector<std::string> site_files = config_.sites;
  const std::string& cfg = effective_digest_;
  auto out = [this](const char* name) { return artifact_path(name); };

  // personas
  {
    std::string digest = stage_digest("personas", {cfg}, {});
    if (!stage_is_fresh("personas", digest)) {
      stage_personas();
      record_stage_digest("personas", digest);
    }
    manifest.counts.personas = read_jsonl(out("personas.jsonl")).size();
  }
  // explorations
  {
    std::vector<std::string> inputs = site_files;
    inputs.push_back(out("personas.jsonl"));
    std::string digest = stage_digest("explorations", {cfg}, inputs);
    if (!stage_is_fresh("explorations", digest)) {
      stage_explore();
      record_stage_digest("explorations", digest);
    }
    manifest.counts.explorations_scheduled = manifest.counts.personas * config_.sites.size();
    for (const std::string& line : read_jsonl(out("explorations.jsonl"))) {
      if (deserialize_exploration(line).succeeded) ++manifest.counts.explorations_succeeded;
    }
  }
  // tasks
  {
    std::string digest =
        stage_digest("tasks", {cfg}, {out("personas.jsonl"), out("explorations.jsonl")});
    if (!stage_is_fresh("tasks", digest)) {
      stage_tasks();
      record_stage_digest("tasks", digest);
    }
    manifest.counts.tasks = read_jsonl(out("tasks.jsonl")).size();
  }
  // rollouts
  {
    std::vector<std::string> inputs = site_files;
    inputs.push_back(out("tasks.jsonl"));
    std::string digest = stage_digest("trajectories", {cfg}, inputs);
    if (!stage_is_fresh("trajectories", digest)) {
      stage_rollout();
      record_stage_digest("trajectories", digest);
    }
    manifest.counts.trajectories = read_jsonl(out("trajectories.jsonl")).size();
  }
  // judging
  {
    std::string digest =
        stage_digest("verdicts", {cfg}, {out("tasks.jsonl"), out("trajectories.jsonl")});
    if (!stage_is_fresh("verdicts", digest)) {
      stage_judge(true);
      record_stage_digest("verdicts", digest);
    }
    manifest.counts.verdicts = read_jsonl(out("verdicts.jsonl")).size();
  }
  // filtering
  {
    std::string digest =
        stage_digest("retained", {cfg}, {out("verdicts.jsonl"), out("trajectories.jsonl")});
    if (!stage_is_fresh("retained", digest)) {
      stage_filter();
      record_stage_digest("retained", digest);
    }
    manifest.counts.retained = read_jsonl(out("retained.jsonl")).size();
  }
  // export
  {
    std::string digest = stage_digest("sft", {cfg}, {out("retained.jsonl"), out("tasks.jsonl")});
    if (!stage_is_fresh("sft", digest)) {
      stage_export();
      record_stage_digest("sft", digest);
    }
    std::size_t examples = 0;
    std::size_t retained_steps = 0;
    for (const std::string& line : read_jsonl(out("sft.jsonl"))) {
      SftConversation conv = deserialize_sft_conversation(line);
      examples += (conv.messages.size() - 1) / 2;
    }
    for (const std::string& line : read_jsonl(out("retained.jsonl"))) {
      retained_steps += deserialize_trajectory(line).steps.size();
    }
    manifest.counts.exported_examples = examples;
    if (examples != retained_steps) {
      throw Error("manifest invariant broken: exported examples " + std::to_string(examples) +
                  " != retained step count " + std::to_string(retained_steps));
    }
  }

  if (manifest.counts.retained > manifest.counts.verdicts ||
      manifest.counts.verdicts > manifest.counts.trajectories) {
    throw Error("manifest invariant broken: retained <= judged <= trajectories");
  }

  manifest.finished_at = iso8601_now();
  write_text_file(artifact_path("manifest.json"), serialize_manifest(manifest));

  PipelineResult result;
  result.manifest = manifest;
  result.issues = issues_;
  result.stage_exhausted = stage_exhausted_;
  return result;
}

// --- ablations -----------------------------------------------------------------

FlipReport Pipeline::ablate_no_hints() {
  std::vector<JudgedRecord> without = stage_judge(false);
  std::vector<JudgedRecord> with;
  for (const std::string& line : read_jsonl(artifact_path("verdicts.jsonl"))) {
    with.push_back(deserialize_judged(line));
  }
  FlipReport report = flip_analysis(with, without);
  write_text_file(artifact_path("flip_report.json"), serialize_flip_report(report));
  return report;
}

ExportCounts Pipeline::ablate_no_judge() {
  std::map<std::string, TaskSpec> tasks;
  for (const std::string& line : read_jsonl(artifact_path("tasks.jsonl"))) {
    TaskSpec spec = deserialize_task_spec(line);
    tasks[spec.id] = std::move(spec);
  }
  std::map<std::string, Verdict> verdicts;
  for (const std::string& line : read_jsonl(artifact_path("verdicts.jsonl"))) {
    JudgedRecord record = deserialize_judged(line);
    verdicts[record.trajectory_id] = record.verdict;
  }

  std::vector<std::pair<SftConversation, Verdict>> records;
  std::size_t counter = 1;
  for (const std::string& line : read_jsonl(artifact_path("trajectories.jsonl"))) {
    Trajectory traj = deserialize_trajectory(line);
    auto it = verdicts.find(traj.id);
    if (it == verdicts.end()) continue;  // unjudged stays excluded
    SftConversation conv = to_sft_conversation(traj, to_agent_task(tasks.at(traj.task_id)),
                                               prompts_.agent_system, config_.budget);
    conv.id = stage_id("sft-unfiltered", counter++);
    records.emplace_back(std::move(conv), it->second);
  }
  return export_unfiltered(records, artifact_path("sft_unfiltered.jsonl"));
}

ExportCounts Pipeline::ablate_truncate(std::size_t chars) {
  std::vector<SftConversation> convs = transform_reasoning(
      load_conversations("sft.jsonl"),
      ReasoningTransform{ReasoningTransform::Kind::Truncate, chars});
  return export_jsonl(convs, artifact_path("sft_truncate_" + std::to_string(chars) + ".jsonl"),
                      ExportMode::Multiturn);
}

ExportCounts Pipeline::ablate_remove_reasoning() {
  std::vector<SftConversation> convs = transform_reasoning(
      load_conversations("sft.jsonl"), ReasoningTransform{ReasoningTransform::Kind::Remove, 0});
  return export_jsonl(convs, artifact_path("sft_no_reasoning.jsonl"), ExportMode::Multiturn);
}

ExportCounts Pipeline::ablate_subsample(std::size_t n) {
  std::vector<SftConversation> convs =
      subsample(load_conversations("sft.jsonl"), n, config_.seeds.pipeline);
  return export_jsonl(convs, artifact_path("sft_subsample_" + std::to_string(n) + ".jsonl"),
                      ExportMode::Multiturn);
}

}  // namespace webtraj
