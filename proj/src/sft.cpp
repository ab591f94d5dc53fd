#include "webtraj/sft.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "webtraj/util.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

namespace {

Role role_from_name(const std::string& name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  throw LoadError("unknown message role '" + name + "'");
}

ordered_json conversation_to_json(const SftConversation& c) {
  ordered_json j;
  j["id"] = c.id;
  j["task_id"] = c.task_id;
  j["site"] = c.site.value;
  ordered_json messages = ordered_json::array();
  for (const SftMessage& m : c.messages) {
    messages.push_back({{"role", role_name(m.role)}, {"text", m.text}, {"loss", m.loss}});
  }
  j["messages"] = std::move(messages);
  j["meta"] = ordered_json{{"steps", c.steps}, {"response_chars", c.response_chars}};
  return j;
}

}  // namespace

std::string serialize_sft_conversation(const SftConversation& c) {
  return conversation_to_json(c).dump();
}

SftConversation deserialize_sft_conversation(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad conversation record: ") + e.what());
  }
  SftConversation c;
  c.id = j.at("id").get<std::string>();
  c.task_id = j.at("task_id").get<std::string>();
  c.site.value = j.at("site").get<std::string>();
  for (const auto& m : j.at("messages")) {
    c.messages.push_back({role_from_name(m.at("role").get<std::string>()),
                          m.at("text").get<std::string>(), m.at("loss").get<bool>()});
  }
  c.steps = j.at("meta").at("steps").get<std::size_t>();
  c.response_chars = j.at("meta").at("response_chars").get<std::vector<std::size_t>>();
  return c;
}

void validate_sft_conversation(const SftConversation& c) {
  if (c.messages.empty() || c.messages.front().role != Role::System ||
      c.messages.front().loss) {
    throw ConfigError("conversation " + c.id + ": first message must be a loss-free system turn");
  }
  for (std::size_t i = 1; i < c.messages.size(); ++i) {
    Role expected = (i % 2 == 1) ? Role::User : Role::Assistant;
    if (c.messages[i].role != expected) {
      throw ConfigError("conversation " + c.id + ": user/assistant turns must alternate");
    }
    if (c.messages[i].loss != (expected == Role::Assistant)) {
      throw ConfigError("conversation " + c.id + ": loss must be set exactly on assistant turns");
    }
  }
  if (c.messages.size() % 2 == 0) {
    throw ConfigError("conversation " + c.id + ": dangling user turn without a response");
  }
}

SftConversation to_sft_conversation(const Trajectory& traj, const AgentTask& task,
                                    const std::string& system_prompt, const TokenBudget& budget) {
  if (traj.steps.empty()) {
    throw ConfigError("trajectory " + traj.id + " has no steps to convert");
  }
  SftConversation c;
  c.id = traj.id;
  c.task_id = task.id;
  c.site = task.site;
  c.steps = traj.steps.size();
  c.messages.push_back({Role::System, system_prompt, false});
  for (const Step& step : traj.steps) {
    c.messages.push_back({Role::User, compose_observation_prompt(step.observation, budget), false});
    std::string assistant = render_agent_response(step.response);
    c.response_chars.push_back(utf8_length(assistant));
    c.messages.push_back({Role::Assistant, std::move(assistant), true});
  }
  return c;
}

namespace {

ExportCounts write_conversations(const std::vector<SftConversation>& convs,
                                 const std::string& path, ExportMode mode) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot write export file: " + path);

  ExportCounts counts;
  for (const SftConversation& c : convs) {
    validate_sft_conversation(c);
    ++counts.conversations;
    if (mode == ExportMode::Multiturn) {
      out << serialize_sft_conversation(c) << '\n';
      counts.examples += (c.messages.size() - 1) / 2;
    } else {
      // One (system, user, assistant) triple per exchange.
      for (std::size_t i = 1; i + 1 < c.messages.size(); i += 2) {
        SftConversation triple;
        std::size_t exchange = (i - 1) / 2;
        triple.id = c.id + "-step-" + std::to_string(exchange);
        triple.task_id = c.task_id;
        triple.site = c.site;
        triple.messages = {c.messages.front(), c.messages[i], c.messages[i + 1]};
        triple.steps = 1;
        triple.response_chars = {c.response_chars.at(exchange)};
        out << serialize_sft_conversation(triple) << '\n';
        ++counts.examples;
      }
    }
  }
  if (!out) throw LoadError("write failed: " + path);
  return counts;
}

}  // namespace

ExportCounts export_jsonl(const std::vector<SftConversation>& convs, const std::string& path,
                          ExportMode mode) {
  return write_conversations(convs, path, mode);
}

ExportCounts export_unfiltered(const std::vector<std::pair<SftConversation, Verdict>>& records,
                               const std::string& path, ExportMode mode) {
  std::vector<SftConversation> all;
  all.reserve(records.size());
  for (const auto& [conv, verdict] : records) all.push_back(conv);
  return write_conversations(all, path, mode);
}

std::string serialize_stats(const DataStats& stats) {
  ordered_json j;
  j["trajectories"] = stats.trajectories;
  j["examples"] = stats.examples;
  j["avg_steps"] = stats.avg_steps;
  j["avg_response_chars"] = stats.avg_response_chars;
  j["avg_response_chars_inner"] = stats.avg_response_chars_inner;
  j["thought_median_chars"] = stats.thought_median_chars;
  j["think_present_rate"] = stats.think_present_rate;
  j["think_median_chars"] = stats.think_median_chars;
  j["action_distribution"] = stats.action_distribution;
  return j.dump(2) + "\n";
}

DataStats compute_stats(const std::vector<SftConversation>& convs) {
  DataStats stats;
  stats.trajectories = convs.size();

  std::vector<double> thought_lengths;
  std::vector<double> think_lengths;
  std::size_t think_present = 0;
  std::size_t total_chars = 0;
  std::size_t total_inner_chars = 0;
  std::map<std::string, std::size_t> verb_counts;

  for (const SftConversation& c : convs) {
    for (const SftMessage& m : c.messages) {
      if (m.role != Role::Assistant) continue;
      ++stats.examples;
      total_chars += utf8_length(m.text);

      AgentResponse response = parse_agent_response(m.text);
      std::size_t inner = utf8_length(render_action(response.action));
      if (response.thought) {
        std::size_t len = utf8_length(*response.thought);
        thought_lengths.push_back(static_cast<double>(len));
        inner += len;
      }
      if (response.think) {
        std::size_t len = utf8_length(*response.think);
        think_lengths.push_back(static_cast<double>(len));
        inner += len;
        ++think_present;
      }
      total_inner_chars += inner;
      ++verb_counts[action_verb(response.action)];
    }
  }

  if (stats.examples > 0) {
    double examples = static_cast<double>(stats.examples);
    stats.avg_steps = examples / static_cast<double>(stats.trajectories);
    stats.avg_response_chars = static_cast<double>(total_chars) / examples;
    stats.avg_response_chars_inner = static_cast<double>(total_inner_chars) / examples;
    stats.think_present_rate = static_cast<double>(think_present) / examples;
    for (const auto& [verb, count] : verb_counts) {
      stats.action_distribution[verb] = static_cast<double>(count) / examples;
    }
  }
  stats.thought_median_chars = lower_median(std::move(thought_lengths));
  stats.think_median_chars = lower_median(std::move(think_lengths));
  return stats;
}

std::vector<SftConversation> transform_reasoning(const std::vector<SftConversation>& convs,
                                                 const ReasoningTransform& transform) {
  if (transform.kind == ReasoningTransform::Kind::Truncate && transform.chars == 0) {
    throw ConfigError("reasoning truncation needs a positive character limit");
  }
  std::vector<SftConversation> out;
  out.reserve(convs.size());
  for (const SftConversation& c : convs) {
    SftConversation copy = c;
    std::size_t exchange = 0;
    for (SftMessage& m : copy.messages) {
      if (m.role != Role::Assistant) continue;
      AgentResponse response = parse_agent_response(m.text);
      if (transform.kind == ReasoningTransform::Kind::Remove) {
        response.thought.reset();
        response.think.reset();
      } else {
        if (response.thought) *response.thought = utf8_prefix(*response.thought, transform.chars);
        if (response.think) *response.think = utf8_prefix(*response.think, transform.chars);
      }
      m.text = render_agent_response(response);
      copy.response_chars.at(exchange) = utf8_length(m.text);
      ++exchange;
    }
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<SftConversation> subsample(const std::vector<SftConversation>& records, std::size_t n,
                                       std::uint64_t seed) {
  if (n > records.size()) {
    throw ConfigError("subsample: n=" + std::to_string(n) + " exceeds corpus size " +
                      std::to_string(records.size()));
  }
  if (n == records.size()) return records;

  std::map<std::string, std::vector<std::size_t>> by_site;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_site[records[i].site.value].push_back(i);
  }

  // Largest-remainder allocation keeps every site within +-1 of exact
  // proportionality.
  struct Share {
    std::string site;
    std::size_t quota;
    std::size_t remainder;
  };
  std::vector<Share> shares;
  std::size_t assigned = 0;
  for (const auto& [site, indices] : by_site) {
    std::size_t scaled = n * indices.size();
    shares.push_back({site, scaled / records.size(), scaled % records.size()});
    assigned += scaled / records.size();
  }
  std::vector<Share*> order;
  for (Share& s : shares) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Share* a, const Share* b) {
    if (a->remainder != b->remainder) return a->remainder > b->remainder;
    return a->site < b->site;
  });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++order[i % order.size()]->quota;

  std::vector<bool> selected(records.size(), false);
  for (const Share& share : shares) {
    std::vector<std::size_t> indices = by_site.at(share.site);
    SplitMix64 rng(seed ^ fnv1a64(share.site));
    deterministic_shuffle(indices, rng);
    for (std::size_t i = 0; i < share.quota; ++i) selected[indices[i]] = true;
  }

  std::vector<SftConversation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (selected[i]) out.push_back(records[i]);
  }
  return out;
}

}  // namespace webtraj
