#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "webtraj/backend.hpp"
#include "webtraj/trace.hpp"

namespace webtraj {

struct JudgeOptions {
  bool include_hints = true;
  std::uint64_t option_seed = 0;
  bool include_screenshots = true;
};

struct FlipReport {
  std::size_t total_rejudged = 0;
  std::size_t flipped = 0;
  std::size_t s_to_u = 0;
  std::size_t u_to_s = 0;
  double flip_rate = 0.0;
};

std::string serialize_flip_report(const FlipReport& report);

/// Answer options per question, in canonical order.
const std::vector<std::string>& yes_no_options();
const std::vector<std::string>& optimality_options();
const std::vector<std::string>& success_options();

/// Deterministic per-question option ordering: a counter-based draw over
/// (option_seed, trajectory id, question index), so re-judging reproduces
/// the same permutations.
std::vector<std::string> option_permutation(const std::vector<std::string>& options,
                                            std::uint64_t option_seed,
                                            const std::string& trajectory_id,
                                            std::size_t question_index);

/// Builds the judge conversation: the system prompt, then the goal (hints
/// appended when enabled), the per-step record (url, reasoning, rendered
/// action), the final accessibility tree, first/last screenshot refs when
/// present, and the four questions with loop -> side -> optimal -> success
/// order, success always last.
std::vector<ChatMessage> compose_judge_prompt(const Trajectory& traj, const TaskSpec& task,
                                              const JudgeOptions& opts,
                                              const std::string& system_prompt);

/// Extracts <loop>, <side>, <optimal>, <success> (first occurrence each).
/// Labels match case-insensitively after trimming; success must equal
/// "Successful" or "Unsuccessful" exactly, never by substring. Missing tags
/// or out-of-set labels raise VerdictParseError. hints_used and
/// option_permutation_seed are left for the caller.
Verdict parse_verdict(const std::string& text);

class JudgeError : public Error {
 public:
  using Error::Error;
};

struct JudgeRunOptions {
  std::string system_prompt;
  GenParams gen;
  /// Re-asks on verdict parse failure, and transport retries per ask.
  int retries = 10;
};

/// compose -> chat (with transport retries) -> parse, re-asking on parse
/// failure. Throws JudgeError once the re-asks are exhausted; such
/// trajectories count as unjudged.
Verdict judge_trajectory(Backend& backend, const Trajectory& traj, const TaskSpec& task,
                         const JudgeOptions& opts, const JudgeRunOptions& run);

/// Keeps exactly the records whose verdict is Successful, in input order.
template <typename T>
std::vector<std::pair<T, Verdict>> filter_successful(
    const std::vector<std::pair<T, Verdict>>& records) {
  std::vector<std::pair<T, Verdict>> retained;
  for (const auto& record : records) {
    if (record.second.success) retained.push_back(record);
  }
  return retained;
}

/// Compares success labels between two judging passes keyed by trajectory
/// id; only ids present in both sides enter the report. Duplicate ids in
/// either input raise ConfigError.
FlipReport flip_analysis(const std::vector<JudgedRecord>& with_hints,
                         const std::vector<JudgedRecord>& without_hints);

}  // namespace webtraj
