#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "webtraj/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;
constexpr int kExitExhausted = 4;

int finish(webtraj::Pipeline& pipeline, bool exhausted) {
  const webtraj::StageIssues& issues = pipeline.issues();
  if (exhausted) return kExitExhausted;
  if (issues.job_errors || issues.synthesis_errors || issues.env_error_rollouts ||
      issues.unjudged) {
    std::fprintf(stderr,
                 "partial failures: %zu job errors, %zu synthesis errors, %zu env-error "
                 "rollouts, %zu unjudged\n",
                 issues.job_errors, issues.synthesis_errors, issues.env_error_rollouts,
                 issues.unjudged);
    return kExitPartial;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic web-agent trajectory pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "Pipeline config file")->required();
  app.add_option("--set", overrides, "Override a config key (section.key=value)");

  auto* cmd_plan = app.add_subcommand("plan", "Print the schedule without backend calls");
  auto* cmd_run = app.add_subcommand("run", "Run every stage and write the manifest");
  auto* cmd_personas = app.add_subcommand("personas", "Generate personas.jsonl");
  auto* cmd_explore = app.add_subcommand("explore", "Run explorations over personas x sites");
  auto* cmd_tasks = app.add_subcommand("tasks", "Synthesize tasks from succeeded explorations");
  auto* cmd_rollout = app.add_subcommand("rollout", "Roll out hint-blind agent episodes");
  auto* cmd_judge = app.add_subcommand("judge", "Judge trajectories with hints");
  auto* cmd_filter = app.add_subcommand("filter", "Keep judged-successful trajectories");
  auto* cmd_export = app.add_subcommand("export", "Write sft.jsonl and stats.json");
  bool per_step = false;
  cmd_export->add_flag("--per-step", per_step,
                       "Also write sft_per_step.jsonl (one exchange per line)");
  auto* cmd_stats = app.add_subcommand("stats", "Recompute stats.json from sft.jsonl");

  auto* cmd_ablate = app.add_subcommand("ablate", "Ablation transforms over artifacts");
  cmd_ablate->require_subcommand(1);
  auto* ab_no_hints = cmd_ablate->add_subcommand("no-hints", "Re-judge without hints + flips");
  auto* ab_no_judge = cmd_ablate->add_subcommand("no-judge", "Export all judged trajectories");
  std::size_t truncate_chars = 500;
  auto* ab_truncate = cmd_ablate->add_subcommand("truncate", "Truncate reasoning blocks");
  ab_truncate->add_option("--chars", truncate_chars, "Character limit per block")->required();
  auto* ab_remove = cmd_ablate->add_subcommand("remove-reasoning", "Strip reasoning blocks");
  std::size_t subsample_n = 0;
  auto* ab_subsample = cmd_ablate->add_subcommand("subsample", "Stratified seeded subsample");
  ab_subsample->add_option("--n", subsample_n, "Sample size")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    webtraj::PipelineConfig config = webtraj::load_config(config_path, overrides);

    if (cmd_plan->parsed()) {
      webtraj::PlanReport report = webtraj::plan(config);
      std::printf("personas: %zu\nexplorations: %zu\ntasks: %zu\n", report.personas,
                  report.explorations, report.tasks);
      return kExitOk;
    }

    webtraj::Pipeline pipeline(config);

    if (cmd_run->parsed()) {
      webtraj::PipelineResult result = pipeline.run();
      std::printf(
          "personas %zu | explorations %zu/%zu | tasks %zu | trajectories %zu | "
          "verdicts %zu | retained %zu | examples %zu\n",
          result.manifest.counts.personas, result.manifest.counts.explorations_succeeded,
          result.manifest.counts.explorations_scheduled, result.manifest.counts.tasks,
          result.manifest.counts.trajectories, result.manifest.counts.verdicts,
          result.manifest.counts.retained, result.manifest.counts.exported_examples);
      return finish(pipeline, result.stage_exhausted);
    }
    if (cmd_personas->parsed()) {
      std::printf("personas: %zu\n", pipeline.stage_personas().size());
    } else if (cmd_explore->parsed()) {
      auto traces = pipeline.stage_explore();
      std::size_t succeeded = 0;
      for (const auto& t : traces) succeeded += t.succeeded ? 1 : 0;
      std::printf("explorations: %zu (%zu succeeded)\n", traces.size(), succeeded);
    } else if (cmd_tasks->parsed()) {
      std::printf("tasks: %zu\n", pipeline.stage_tasks().size());
    } else if (cmd_rollout->parsed()) {
      std::printf("trajectories: %zu\n", pipeline.stage_rollout().size());
    } else if (cmd_judge->parsed()) {
      std::printf("verdicts: %zu\n", pipeline.stage_judge(true).size());
    } else if (cmd_filter->parsed()) {
      std::printf("retained: %zu\n", pipeline.stage_filter().size());
    } else if (cmd_export->parsed()) {
      webtraj::ExportCounts counts = pipeline.stage_export();
      std::printf("conversations: %zu, examples: %zu\n", counts.conversations, counts.examples);
      if (per_step) {
        webtraj::ExportCounts flat = pipeline.stage_export_per_step();
        std::printf("per-step lines: %zu\n", flat.examples);
      }
    } else if (cmd_stats->parsed()) {
      webtraj::DataStats stats = pipeline.stage_stats();
      std::printf("trajectories: %zu, examples: %zu, avg_steps: %.3f\n", stats.trajectories,
                  stats.examples, stats.avg_steps);
    } else if (ab_no_hints->parsed()) {
      webtraj::FlipReport report = pipeline.ablate_no_hints();
      std::printf("rejudged: %zu, flipped: %zu (s->u %zu, u->s %zu), rate: %.3f\n",
                  report.total_rejudged, report.flipped, report.s_to_u, report.u_to_s,
                  report.flip_rate);
    } else if (ab_no_judge->parsed()) {
      webtraj::ExportCounts counts = pipeline.ablate_no_judge();
      std::printf("conversations: %zu, examples: %zu\n", counts.conversations, counts.examples);
    } else if (ab_truncate->parsed()) {
      webtraj::ExportCounts counts = pipeline.ablate_truncate(truncate_chars);
      std::printf("conversations: %zu, examples: %zu\n", counts.conversations, counts.examples);
    } else if (ab_remove->parsed()) {
      webtraj::ExportCounts counts = pipeline.ablate_remove_reasoning();
      std::printf("conversations: %zu, examples: %zu\n", counts.conversations, counts.examples);
    } else if (ab_subsample->parsed()) {
      webtraj::ExportCounts counts = pipeline.ablate_subsample(subsample_n);
      std::printf("conversations: %zu, examples: %zu\n", counts.conversations, counts.examples);
    }
    return finish(pipeline, false);
  } catch (const webtraj::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const webtraj::LoadError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitPartial;
  }
}
