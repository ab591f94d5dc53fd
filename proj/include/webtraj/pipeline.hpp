#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "webtraj/axtree.hpp"
#include "webtraj/backend.hpp"
#include "webtraj/judge.hpp"
#include "webtraj/prompts.hpp"
#include "webtraj/sft.hpp"
#include "webtraj/sim_env.hpp"
#include "webtraj/synthesis.hpp"
#include "webtraj/trace.hpp"

namespace webtraj {

struct PersonaConfig {
  std::string mode = "builtin";  // builtin | backend
  std::size_t count = 5;
};

struct BackendConfig {
  std::string mode = "scripted";  // scripted | live
  std::string endpoint;
  std::string script;
  std::string model = "scripted";
  int workers = 1;
  double temperature = 0.0;
  std::string api_key_env = "WEBTRAJ_API_KEY";
};

struct SeedConfig {
  std::uint64_t pipeline = 0;
  std::uint64_t judge_options = 0;
};

struct PipelineConfig {
  std::vector<std::string> sites;  // site-spec paths
  PersonaConfig personas;
  std::size_t k_tasks_per_exploration = 2;
  BackendConfig backend;
  TokenBudget budget;
  SeedConfig seeds;
  int retries = 10;
  std::string output_dir = "out";
  std::size_t exploration_step_limit = kExplorationStepLimit;
  std::string prompts_dir;  // empty: compiled-in defaults
};

/// Key-value config document: `key = value` lines with `[section]` headers,
/// `#` comments, comma-separated lists. Unknown keys are errors.
PipelineConfig parse_config(const std::string& text,
                            const std::vector<std::string>& overrides = {});
PipelineConfig load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});

/// Canonical digest over every config field, recorded in the manifest.
std::string config_digest(const PipelineConfig& config);

/// Scheduled stage sizes, computed without any backend call.
struct PlanReport {
  std::size_t personas = 0;
  std::size_t explorations = 0;
  std::size_t tasks = 0;
};
PlanReport plan(const PipelineConfig& config);

std::unique_ptr<Backend> make_backend(const PipelineConfig& config);

struct StageIssues {
  std::size_t job_errors = 0;       // worker exceptions across stages
  std::size_t synthesis_errors = 0; // anchors that never produced a task
  std::size_t env_error_rollouts = 0;
  std::size_t unjudged = 0;         // verdict parse exhaustion
};

struct PipelineResult {
  RunManifest manifest;
  StageIssues issues;
  /// A stage with scheduled work produced nothing (backend exhaustion).
  bool stage_exhausted = false;
};

/// Stage-by-stage pipeline over `{output_dir}/{stage}.jsonl` artifacts.
/// Individual stages read their inputs from the previous stage's file so
/// the CLI can run them one at a time.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  const PipelineConfig& config() const { return config_; }
  const PromptAssets& prompts() const { return prompts_; }
  const std::map<std::string, SiteSpec>& site_specs() const { return site_specs_; }

  std::vector<Persona> stage_personas();
  std::vector<ExplorationTrace> stage_explore();
  std::vector<TaskSpec> stage_tasks();
  std::vector<Trajectory> stage_rollout();
  std::vector<JudgedRecord> stage_judge(bool include_hints = true);
  std::vector<Trajectory> stage_filter();
  ExportCounts stage_export();
  /// Flattened (system, user, assistant) view of the same retained corpus.
  ExportCounts stage_export_per_step();
  DataStats stage_stats();

  /// Runs every stage in order, reusing digest-matched stage outputs, and
  /// writes manifest.json.
  PipelineResult run();

  // Ablation commands over existing artifacts.
  FlipReport ablate_no_hints();
  ExportCounts ablate_no_judge();
  ExportCounts ablate_truncate(std::size_t chars);
  ExportCounts ablate_remove_reasoning();
  ExportCounts ablate_subsample(std::size_t n);

  std::string artifact_path(const std::string& name) const;

  StageIssues& issues() { return issues_; }

 private:
  std::vector<SftConversation> build_retained_conversations() const;
  std::vector<SftConversation> load_conversations(const std::string& name) const;
  bool stage_is_fresh(const std::string& stage, const std::string& digest) const;
  void record_stage_digest(const std::string& stage, const std::string& digest);
  std::string stage_digest(const std::string& stage, const std::vector<std::string>& config_parts,
                           const std::vector<std::string>& input_files) const;

  PipelineConfig config_;
  PromptAssets prompts_;
  std::string effective_digest_;  // config digest + loaded prompt texts
  std::vector<std::string> site_order_;  // site ids in config order
  std::map<std::string, SiteSpec> site_specs_;
  std::unique_ptr<Backend> backend_;
  StageIssues issues_;
  bool stage_exhausted_ = false;
  std::map<std::string, std::string> stored_digests_;
};

}  // namespace webtraj
