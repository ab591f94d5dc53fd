#include "webtraj/judge.hpp"

#include <map>
#include <set>

#include "json.hpp"
#include "webtraj/util.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

std::string serialize_flip_report(const FlipReport& report) {
  ordered_json j;
  j["total_rejudged"] = report.total_rejudged;
  j["flipped"] = report.flipped;
  j["s_to_u"] = report.s_to_u;
  j["u_to_s"] = report.u_to_s;
  j["flip_rate"] = report.flip_rate;
  return j.dump(2) + "\n";
}

const std::vector<std::string>& yes_no_options() {
  static const std::vector<std::string> options = {"Yes", "No"};
  return options;
}

const std::vector<std::string>& optimality_options() {
  static const std::vector<std::string> options = {"Complete Failure", "Suboptimal",
                                                   "Somewhat Optimal", "Completely Optimal"};
  return options;
}

const std::vector<std::string>& success_options() {
  static const std::vector<std::string> options = {"Successful", "Unsuccessful"};
  return options;
}

std::vector<std::string> option_permutation(const std::vector<std::string>& options,
                                            std::uint64_t option_seed,
                                            const std::string& trajectory_id,
                                            std::size_t question_index) {
  std::uint64_t key = option_seed;
  key = key * 0x100000001b3ULL + fnv1a64(trajectory_id);
  key = key * 0x100000001b3ULL + question_index;
  SplitMix64 rng(key);
  std::vector<std::string> permuted = options;
  deterministic_shuffle(permuted, rng);
  return permuted;
}

namespace {

std::string options_line(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i > 0) out += " | ";
    out += options[i];
  }
  return out;
}

}  // namespace

std::vector<ChatMessage> compose_judge_prompt(const Trajectory& traj, const TaskSpec& task,
                                              const JudgeOptions& opts,
                                              const std::string& system_prompt) {
  std::string user;
  user += "# Task goal\n" + task.intent + "\n";
  if (opts.include_hints && !task.hints.empty()) {
    user += "\n# Evaluation hints\n";
    for (const std::string& hint : task.hints) user += "- " + hint + "\n";
  }

  user += "\n# Trajectory (" + std::to_string(traj.steps.size()) + " steps)\n";
  for (const Step& step : traj.steps) {
    user += "## Step " + std::to_string(step.index) + "\n";
    user += "URL: " + step.observation.url + "\n";
    if (step.response.thought) user += "Reasoning: " + *step.response.thought + "\n";
    if (step.response.think) user += "Deliberation: " + *step.response.think + "\n";
    user += "Action: " + render_action(step.executed) + "\n";
    if (step.error) user += "Environment note: " + *step.error + "\n";
  }

  user += "\n# Final accessibility tree\n";
  user += traj.steps.empty() ? "(no steps recorded)" : traj.steps.back().observation.axtree_text;
  user += "\n";

  std::vector<std::string> attachments;
  if (opts.include_screenshots && !traj.steps.empty()) {
    if (traj.steps.front().observation.screenshot_ref) {
      attachments.push_back(*traj.steps.front().observation.screenshot_ref);
    }
    if (traj.steps.size() > 1 && traj.steps.back().observation.screenshot_ref) {
      attachments.push_back(*traj.steps.back().observation.screenshot_ref);
    }
  }

  struct Question {
    const char* text;
    const char* tag;
    const std::vector<std::string>& options;
  };
  const Question questions[] = {
      {"Did the agent loop through actions without making progress?", "loop", yes_no_options()},
      {"Did the agent perform unnecessary actions with unintended side effects?", "side",
       yes_no_options()},
      {"Was the task performed optimally?", "optimal", optimality_options()},
      {"Was the task successfully completed?", "success", success_options()},
  };

  user += "\n# Questions\n";
  user += "Answer each question inside its tag, picking exactly one option verbatim.\n";
  for (std::size_t q = 0; q < 4; ++q) {
    std::vector<std::string> permuted =
        option_permutation(questions[q].options, opts.option_seed, traj.id, q);
    user += std::to_string(q + 1) + ". " + questions[q].text + " Reply inside <" +
            questions[q].tag + "></" + questions[q].tag + "> with one of: " +
            options_line(permuted) + "\n";
  }

  return {{Role::System, system_prompt, {}}, {Role::User, user, std::move(attachments)}};
}

namespace {

std::string require_tag(const std::string& text, const char* tag) {
  auto block = first_tag_block(text, tag);
  if (!block) throw VerdictParseError(std::string("judge reply is missing <") + tag + ">");
  return trim(*block);
}

bool parse_yes_no(const std::string& text, const char* tag) {
  std::string label = to_lower(require_tag(text, tag));
  if (label == "yes") return true;
  if (label == "no") return false;
  throw VerdictParseError(std::string("<") + tag + "> must be Yes or No, got '" + label + "'");
}

}  // namespace

Verdict parse_verdict(const std::string& text) {
  Verdict verdict;
  verdict.raw_text = text;
  verdict.loop = parse_yes_no(text, "loop");
  verdict.side_effects = parse_yes_no(text, "side");

  std::string optimal = to_lower(require_tag(text, "optimal"));
  bool matched = false;
  for (Optimality value : {Optimality::CompleteFailure, Optimality::Suboptimal,
                           Optimality::SomewhatOptimal, Optimality::CompletelyOptimal}) {
    if (optimal == to_lower(optimality_label(value))) {
      verdict.optimality = value;
      matched = true;
      break;
    }
  }
  if (!matched) throw VerdictParseError("<optimal> label '" + optimal + "' is outside the scale");

  // Exact-label rule: "Unsuccessful" must not be matched by the
  // "Successful" substring.
  std::string success = to_lower(require_tag(text, "success"));
  if (success == "successful") {
    verdict.success = true;
  } else if (success == "unsuccessful") {
    verdict.success = false;
  } else {
    throw VerdictParseError("<success> must be Successful or Unsuccessful, got '" + success + "'");
  }
  return verdict;
}

Verdict judge_trajectory(Backend& backend, const Trajectory& traj, const TaskSpec& task,
                         const JudgeOptions& opts, const JudgeRunOptions& run) {
  std::vector<ChatMessage> messages = compose_judge_prompt(traj, task, opts, run.system_prompt);
  std::string last_error = "no reply";
  for (int ask = 1; ask <= run.retries; ++ask) {
    std::string reply;
    try {
      reply = with_retries([&] { return backend.chat(messages, run.gen); },
                           RetryPolicy{run.retries, 0, 0, 0, nullptr})
                  .value;
    } catch (const std::exception& e) {
      throw JudgeError("judge backend failed for " + traj.id + ": " + e.what());
    }
    try {
      Verdict verdict = parse_verdict(reply);
      verdict.hints_used = opts.include_hints;
      verdict.option_permutation_seed = opts.option_seed;
      return verdict;
    } catch (const VerdictParseError& e) {
      last_error = e.what();
    }
  }
  throw JudgeError("verdict unparseable for " + traj.id + " after " +
                   std::to_string(run.retries) + " asks: " + last_error);
}

FlipReport flip_analysis(const std::vector<JudgedRecord>& with_hints,
                         const std::vector<JudgedRecord>& without_hints) {
  auto index = [](const std::vector<JudgedRecord>& records, const char* side) {
    std::map<std::string, bool> by_id;
    for (const JudgedRecord& record : records) {
      if (!by_id.emplace(record.trajectory_id, record.verdict.success).second) {
        throw ConfigError(std::string("duplicate trajectory id '") + record.trajectory_id +
                          "' in " + side + " verdicts");
      }
    }
    return by_id;
  };
  std::map<std::string, bool> with = index(with_hints, "with-hints");
  std::map<std::string, bool> without = index(without_hints, "without-hints");

  FlipReport report;
  for (const auto& [id, hinted_success] : with) {
    auto it = without.find(id);
    if (it == without.end()) continue;
    ++report.total_rejudged;
    if (hinted_success != it->second) {
      ++report.flipped;
      if (hinted_success) {
        ++report.s_to_u;
      } else {
        ++report.u_to_s;
      }
    }
  }
  report.flip_rate =
      report.total_rejudged == 0
          ? 0.0
          : static_cast<double>(report.flipped) / static_cast<double>(report.total_rejudged);
  return report;
}

}  // namespace webtraj
