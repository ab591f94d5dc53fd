#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "webtraj/axtree.hpp"
#include "webtraj/backend.hpp"
#include "webtraj/trace.hpp"

namespace webtraj {

struct SftMessage {
  Role role = Role::User;
  std::string text;
  bool loss = false;
};

/// One multi-turn training record: a loss-free system message, then
/// strictly alternating user/assistant exchanges with loss exactly on the
/// assistant side.
struct SftConversation {
  std::string id;
  std::string task_id;
  SiteId site;
  std::vector<SftMessage> messages;
  std::size_t steps = 0;
  /// Unicode scalar count of each assistant message, tags included.
  std::vector<std::size_t> response_chars;
};

std::string serialize_sft_conversation(const SftConversation& c);
SftConversation deserialize_sft_conversation(const std::string& line);

/// Raises ConfigError on any mask/alternation violation.
void validate_sft_conversation(const SftConversation& c);

/// Converts one retained trajectory: per step, the user message is the
/// composed observation prompt and the assistant message the rendered
/// response. Empty trajectories raise ConfigError.
SftConversation to_sft_conversation(const Trajectory& traj, const AgentTask& task,
                                    const std::string& system_prompt,
                                    const TokenBudget& budget = TokenBudget{});

enum class ExportMode { Multiturn, PerStep };

struct ExportCounts {
  std::size_t conversations = 0;
  std::size_t examples = 0;  // assistant messages
};

/// Writes conversations as JSONL: one conversation per line in Multiturn
/// mode, one (system, user, assistant) triple per assistant message in
/// PerStep mode.
ExportCounts export_jsonl(const std::vector<SftConversation>& convs, const std::string& path,
                          ExportMode mode);

/// The no-judge ablation corpus: every judged trajectory's conversation is
/// written regardless of its verdict.
ExportCounts export_unfiltered(const std::vector<std::pair<SftConversation, Verdict>>& records,
                               const std::string& path, ExportMode mode = ExportMode::Multiturn);

struct DataStats {
  std::size_t trajectories = 0;
  std::size_t examples = 0;
  double avg_steps = 0.0;
  double avg_response_chars = 0.0;        // tags included
  double avg_response_chars_inner = 0.0;  // block inner text only
  double thought_median_chars = 0.0;      // lower median over present blocks
  double think_present_rate = 0.0;
  double think_median_chars = 0.0;
  std::map<std::string, double> action_distribution;  // verb -> fraction
};

std::string serialize_stats(const DataStats& stats);

/// Single pass over the corpus; character counts use Unicode scalar values
/// and medians the lower-median convention.
DataStats compute_stats(const std::vector<SftConversation>& convs);

struct ReasoningTransform {
  enum class Kind { Truncate, Remove };
  Kind kind = Kind::Remove;
  std::size_t chars = 0;  // Truncate only; must be > 0
};

/// Truncate cuts each thought/think block to its first `chars` scalar
/// values (no ellipsis, mid-thought cut preserved); Remove deletes both
/// blocks. Actions are untouched and every output re-parses.
std::vector<SftConversation> transform_reasoning(const std::vector<SftConversation>& convs,
                                                 const ReasoningTransform& transform);

/// Seeded stratified sample: per-site counts stay within +-1 of exact
/// proportionality (largest-remainder allocation) and the output preserves
/// input order. n > corpus size raises ConfigError.
std::vector<SftConversation> subsample(const std::vector<SftConversation>& records, std::size_t n,
                                       std::uint64_t seed);

}  // namespace webtraj
