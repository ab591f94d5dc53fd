#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "webtraj/trace.hpp"

namespace webtraj {

/// One accessibility-tree node. Roles come from the documented closed set
/// (see axtree_roles()); anything else degrades to "generic" at load time.
struct AxNode {
  std::string bid;
  std::string role;
  std::string name;
  std::optional<std::string> value;
  std::vector<AxNode> children;
};

const std::vector<std::string>& axtree_roles();
std::string normalize_role(std::string_view role);

struct TokenBudget {
  std::size_t max_total = 65536;
  std::size_t max_prompt = 57344;
  std::size_t max_new = 8192;
};

/// Throws ConfigError unless max_prompt + max_new <= max_total.
void validate_budget(const TokenBudget& budget);

/// Pluggable token estimator; the default is ceil(byte_length / 4).
using TokenEstimator = std::function<std::size_t(std::string_view)>;
std::size_t estimate_tokens(std::string_view text);

/// Deterministic one-line-per-node rendering: indentation is two spaces per
/// depth, each line is `[bid] role 'name'` with an optional ` value='...'`.
/// Throws LoadError on duplicate bids.
std::string render_axtree(const AxNode& root);

inline const std::string kTruncationMarker = "\xE2\x80\xA6[truncated]";

/// Cuts `text` to a prefix of whole lines whose estimate fits
/// budget_tokens. When anything was cut, the one-line truncation marker is
/// appended and counted within the budget; a budget too small for even the
/// marker yields an empty string. Fitting input passes through unchanged.
std::string truncate_to_budget(std::string_view text, std::size_t budget_tokens,
                               const TokenEstimator& estimator = estimate_tokens);

/// Composes the per-step agent prompt: goal, url, last action, then the
/// accessibility tree, with only the tree section truncated so the total
/// estimate fits budget.max_prompt. Throws BudgetExceededError when the
/// non-tree sections alone exceed the budget.
std::string compose_observation_prompt(const Observation& obs, const TokenBudget& budget,
                                       const TokenEstimator& estimator = estimate_tokens);

// --- site-spec JSON schema ------------------------------------------------

/// Parses an AxNode from its site-spec JSON form:
/// {"bid","role","name","value"?,"children"?}. Unknown roles degrade to
/// "generic"; duplicate-bid checking happens in render_axtree/load_site.
AxNode axnode_from_json_text(const std::string& text);
std::string axnode_to_json_text(const AxNode& node);

}  // namespace webtraj
