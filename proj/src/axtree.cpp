#include "webtraj/axtree.hpp"

#include <unordered_set>

#include "json.hpp"
#include "webtraj/errors.hpp"
#include "webtraj/util.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

const std::vector<std::string>& axtree_roles() {
  static const std::vector<std::string> roles = {
      "button",   "link",    "textbox",  "checkbox", "radio",    "combobox", "listbox",
      "option",   "heading", "StaticText", "image",  "navigation", "main",   "form",
      "list",     "listitem", "table",   "row",      "cell",     "tab",      "tabpanel",
      "menu",     "menuitem", "dialog",  "article",  "section",  "searchbox", "generic"};
  return roles;
}

std::string normalize_role(std::string_view role) {
  for (const std::string& known : axtree_roles()) {
    if (known == role) return known;
  }
  return "generic";
}

void validate_budget(const TokenBudget& budget) {
  if (budget.max_prompt + budget.max_new > budget.max_total) {
    throw ConfigError("token budget: max_prompt + max_new exceeds max_total");
  }
}

std::size_t estimate_tokens(std::string_view text) {
  return (text.size() + 3) / 4;
}

namespace {

void render_node(const AxNode& node, std::size_t depth, std::string& out,
                 std::unordered_set<std::string>& seen) {
  if (!seen.insert(node.bid).second) {
    throw LoadError("duplicate bid '" + node.bid + "' in accessibility tree");
  }
  if (!out.empty()) out.push_back('\n');
  out.append(depth * 2, ' ');
  out += "[" + node.bid + "] " + node.role + " '" + node.name + "'";
  if (node.value) out += " value='" + *node.value + "'";
  for (const AxNode& child : node.children) render_node(child, depth + 1, out, seen);
}

}  // namespace

std::string render_axtree(const AxNode& root) {
  std::string out;
  std::unordered_set<std::string> seen;
  render_node(root, 0, out, seen);
  return out;
}

std::string truncate_to_budget(std::string_view text, std::size_t budget_tokens,
                               const TokenEstimator& estimator) {
  if (estimator(text) <= budget_tokens) return std::string(text);

  // Byte offset after each line's trailing newline; offsets[k] is the end
  // of a k-line prefix.
  std::vector<std::size_t> offsets{0};
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n') offsets.push_back(i + 1);
  }

  auto candidate = [&](std::size_t k) {
    std::string out(text.substr(0, offsets[k]));
    out += kTruncationMarker;
    return out;
  };
  auto fits = [&](std::size_t k) { return estimator(candidate(k)) <= budget_tokens; };

  // Estimators are monotone in prefix length, so binary search for the
  // longest whole-line prefix that fits together with the marker.
  if (!fits(0)) return {};
  std::size_t lo = 0;
  std::size_t hi = offsets.size() - 1;
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo + 1) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return candidate(lo);
}

namespace {

std::string compose_sections(const Observation& obs, const std::string& axtree_section) {
  std::string out;
  out += "# Goal\n" + obs.goal + "\n\n";
  out += "# Current URL\n" + obs.url + "\n\n";
  out += "# Last action\n" + obs.last_action.value_or("None") + "\n\n";
  out += "# Accessibility tree\n" + axtree_section;
  return out;
}

}  // namespace

std::string compose_observation_prompt(const Observation& obs, const TokenBudget& budget,
                                       const TokenEstimator& estimator) {
  std::string head = compose_sections(obs, "");
  std::size_t head_cost = estimator(head);
  if (head_cost > budget.max_prompt) {
    throw BudgetExceededError("observation sections other than the tree exceed max_prompt");
  }

  std::size_t tree_budget = budget.max_prompt - head_cost;
  for (;;) {
    std::string tree = truncate_to_budget(obs.axtree_text, tree_budget, estimator);
    std::string prompt = compose_sections(obs, tree);
    if (estimator(prompt) <= budget.max_prompt) return prompt;
    // Estimators need not be subadditive; shrink until the whole fits.
    if (tree_budget == 0) {
      throw BudgetExceededError("observation sections other than the tree exceed max_prompt");
    }
    tree_budget = tree_budget > 8 ? tree_budget - 8 : 0;
  }
}

namespace {

AxNode axnode_from_json(const ordered_json& j) {
  AxNode node;
  node.bid = j.at("bid").get<std::string>();
  node.role = normalize_role(j.at("role").get<std::string>());
  node.name = j.value("name", std::string());
  if (j.contains("value")) node.value = j.at("value").get<std::string>();
  if (j.contains("children")) {
    for (const auto& child : j.at("children")) node.children.push_back(axnode_from_json(child));
  }
  return node;
}

ordered_json axnode_to_json(const AxNode& node) {
  ordered_json j;
  j["bid"] = node.bid;
  j["role"] = node.role;
  j["name"] = node.name;
  if (node.value) j["value"] = *node.value;
  if (!node.children.empty()) {
    ordered_json children = ordered_json::array();
    for (const AxNode& child : node.children) children.push_back(axnode_to_json(child));
    j["children"] = std::move(children);
  }
  return j;
}

}  // namespace

AxNode axnode_from_json_text(const std::string& text) {
  try {
    return axnode_from_json(ordered_json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad AxNode JSON: ") + e.what());
  }
}

std::string axnode_to_json_text(const AxNode& node) {
  return axnode_to_json(node).dump();
}

}  // namespace webtraj
