#include <fstream>
#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "webtraj/errors.hpp"
#include "webtraj/judge.hpp"
#include "webtraj/sft.hpp"

using namespace webtraj;

namespace {

Trajectory trajectory_with_steps(std::size_t steps, const std::string& id = "trajectory-000001") {
  Trajectory t;
  t.id = id;
  t.task_id = "task-000001";
  for (std::size_t i = 0; i < steps; ++i) {
    Step s;
    s.index = i;
    s.observation.url = "sim://forum/p" + std::to_string(i);
    s.observation.axtree_text = "[n] main 'page'";
    s.observation.goal = "the goal";
    bool last = i + 1 == steps;
    Action action = last ? Action{SendMsgToUser{"done"}} : Action{Click{"a"}};
    s.response = AgentResponse{"thought " + std::to_string(i),
                               i % 2 == 0 ? std::optional<std::string>("think " + std::to_string(i))
                                          : std::nullopt,
                               action, ""};
    s.executed = action;
    t.steps.push_back(std::move(s));
  }
  t.terminal = Terminal{TerminalKind::Message, "done"};
  return t;
}

AgentTask task_for(const std::string& site = "forum") {
  return AgentTask{"task-000001", SiteId{site}, "the goal"};
}

SftConversation conv_with(std::size_t steps, const std::string& id, const std::string& site) {
  SftConversation c = to_sft_conversation(trajectory_with_steps(steps, id), task_for(site), "sys");
  c.id = id;
  c.site = SiteId{site};
  return c;
}

}  // namespace

TEST_CASE("a 7-step trajectory becomes 1 system + 7 user + 7 assistant messages") {
  SftConversation c = to_sft_conversation(trajectory_with_steps(7), task_for(), "system prompt");
  REQUIRE(c.messages.size() == 15);
  CHECK(c.messages[0].role == Role::System);
  CHECK(c.messages[0].loss == false);
  CHECK(c.steps == 7);
  CHECK(c.response_chars.size() == 7);
  CHECK_NOTHROW(validate_sft_conversation(c));
}

TEST_CASE("a 1-step trajectory is 3 messages") {
  SftConversation c = to_sft_conversation(trajectory_with_steps(1), task_for(), "sys");
  CHECK(c.messages.size() == 3);
}

TEST_CASE("loss is set exactly on assistant messages") {
  SftConversation c = to_sft_conversation(trajectory_with_steps(7), task_for(), "sys");
  std::size_t loss_count = 0;
  for (std::size_t i = 0; i < c.messages.size(); ++i) {
    const SftMessage& m = c.messages[i];
    if (m.loss) {
      ++loss_count;
      CHECK(m.role == Role::Assistant);
    } else {
      CHECK(m.role != Role::Assistant);
    }
  }
  CHECK(loss_count == 7);
}

TEST_CASE("user messages are the composed observation prompts") {
  SftConversation c = to_sft_conversation(trajectory_with_steps(2), task_for(), "sys");
  CHECK(c.messages[1].text.find("# Goal\nthe goal") != std::string::npos);
  CHECK(c.messages[1].text.find("# Current URL\nsim://forum/p0") != std::string::npos);
  CHECK(c.messages[2].text.find("<thought>thought 0</thought>") != std::string::npos);
  CHECK(c.messages[2].text.find("<action>click(\"a\")</action>") != std::string::npos);
}

TEST_CASE("empty trajectories cannot convert") {
  CHECK_THROWS_AS(to_sft_conversation(trajectory_with_steps(0), task_for(), "sys"), ConfigError);
}

TEST_CASE("conversation serialization round-trips") {
  SftConversation c = conv_with(3, "sft-000001", "forum");
  SftConversation parsed = deserialize_sft_conversation(serialize_sft_conversation(c));
  CHECK(parsed.id == c.id);
  CHECK(parsed.messages.size() == c.messages.size());
  CHECK(parsed.response_chars == c.response_chars);
  CHECK(serialize_sft_conversation(parsed) == serialize_sft_conversation(c));
}

TEST_CASE("validate_sft_conversation rejects mask and alternation violations") {
  SftConversation c = conv_with(2, "x", "forum");
  SftConversation bad = c;
  bad.messages[0].loss = true;
  CHECK_THROWS_AS(validate_sft_conversation(bad), ConfigError);
  bad = c;
  bad.messages[2].loss = false;
  CHECK_THROWS_AS(validate_sft_conversation(bad), ConfigError);
  bad = c;
  bad.messages.pop_back();  // dangling user turn
  CHECK_THROWS_AS(validate_sft_conversation(bad), ConfigError);
  bad = c;
  std::swap(bad.messages[1], bad.messages[2]);
  CHECK_THROWS_AS(validate_sft_conversation(bad), ConfigError);
}

TEST_CASE("multiturn export writes one conversation per line") {
  std::string dir = testutil::fresh_dir("webtraj_export");
  std::vector<SftConversation> convs{conv_with(2, "sft-000001", "forum"),
                                     conv_with(3, "sft-000002", "commerce")};
  ExportCounts counts = export_jsonl(convs, dir + "/multi.jsonl", ExportMode::Multiturn);
  CHECK(counts.conversations == 2);
  CHECK(counts.examples == 5);
  CHECK(read_jsonl(dir + "/multi.jsonl").size() == 2);
}

TEST_CASE("per-step export flattens a 7-step conversation into 7 triples") {
  std::string dir = testutil::fresh_dir("webtraj_export2");
  std::vector<SftConversation> convs{conv_with(7, "sft-000001", "forum")};
  ExportCounts counts = export_jsonl(convs, dir + "/steps.jsonl", ExportMode::PerStep);
  CHECK(counts.conversations == 1);
  CHECK(counts.examples == 7);
  std::vector<std::string> lines = read_jsonl(dir + "/steps.jsonl");
  REQUIRE(lines.size() == 7);
  for (const std::string& line : lines) {
    SftConversation triple = deserialize_sft_conversation(line);
    REQUIRE(triple.messages.size() == 3);
    CHECK(triple.messages[0].role == Role::System);
    CHECK(triple.messages[1].role == Role::User);
    CHECK(triple.messages[2].role == Role::Assistant);
    CHECK_NOTHROW(validate_sft_conversation(triple));
  }
}

TEST_CASE("empty exports produce empty files and zero counts") {
  std::string dir = testutil::fresh_dir("webtraj_export3");
  ExportCounts counts = export_jsonl({}, dir + "/empty.jsonl", ExportMode::Multiturn);
  CHECK(counts.conversations == 0);
  CHECK(counts.examples == 0);
  std::ifstream in(dir + "/empty.jsonl");
  CHECK(in.good());
  CHECK(in.peek() == std::ifstream::traits_type::eof());
}

TEST_CASE("the reference-count fixture exports 16,353 examples from 2,322 conversations") {
  // 2,223 seven-step and 99 eight-step conversations: 2223*7 + 99*8 = 16,353.
  std::vector<SftConversation> convs;
  convs.reserve(2322);
  for (std::size_t i = 0; i < 2322; ++i) {
    convs.push_back(conv_with(i < 99 ? 8 : 7, stage_id("sft", i + 1), "forum"));
  }
  std::string dir = testutil::fresh_dir("webtraj_reference_counts");
  ExportCounts counts = export_jsonl(convs, dir + "/sft.jsonl", ExportMode::Multiturn);
  CHECK(counts.conversations == 2322);
  CHECK(counts.examples == 16353);

  DataStats stats = compute_stats(convs);
  CHECK(stats.trajectories == 2322);
  CHECK(stats.examples == 16353);
  CHECK(stats.avg_steps == doctest::Approx(7.04).epsilon(0.0015));
}

TEST_CASE("a degenerate go_back corpus has zero think rate and a pure distribution") {
  std::vector<SftConversation> convs;
  for (int i = 0; i < 4; ++i) {
    SftConversation c;
    c.id = stage_id("sft", i + 1);
    c.task_id = "task-000001";
    c.site = SiteId{"forum"};
    c.messages.push_back({Role::System, "sys", false});
    c.messages.push_back({Role::User, "obs", false});
    c.messages.push_back({Role::Assistant, "<action>go_back()</action>", true});
    c.steps = 1;
    c.response_chars = {utf8_length("<action>go_back()</action>")};
    convs.push_back(std::move(c));
  }
  DataStats stats = compute_stats(convs);
  CHECK(stats.think_present_rate == 0.0);
  CHECK(stats.thought_median_chars == 0.0);
  REQUIRE(stats.action_distribution.size() == 1);
  CHECK(stats.action_distribution.at("go_back") == 1.0);
  CHECK(stats.examples == 4);
}

TEST_CASE("stats on an empty corpus are all zero") {
  DataStats stats = compute_stats({});
  CHECK(stats.trajectories == 0);
  CHECK(stats.examples == 0);
  CHECK(stats.avg_steps == 0.0);
  CHECK(stats.action_distribution.empty());
}

TEST_CASE("compute_stats matches a brute-force recount on a random corpus") {
  SplitMix64 rng(2026);
  std::vector<SftConversation> convs;
  for (int i = 0; i < 300; ++i) {
    SftConversation c;
    c.id = stage_id("sft", i + 1);
    c.task_id = "task-000001";
    c.site = SiteId{i % 2 == 0 ? "forum" : "commerce"};
    c.messages.push_back({Role::System, "sys", false});
    std::size_t steps = 1 + rng.next_below(9);
    for (std::size_t sidx = 0; sidx < steps; ++sidx) {
      c.messages.push_back({Role::User, "obs " + std::to_string(sidx), false});
      AgentResponse r = testutil::random_response(rng);
      std::string text = render_agent_response(r);
      c.response_chars.push_back(utf8_length(text));
      c.messages.push_back({Role::Assistant, text, true});
    }
    c.steps = steps;
    convs.push_back(std::move(c));
  }

  DataStats stats = compute_stats(convs);

  // Independent recount, written against the raw message texts.
  std::size_t examples = 0;
  std::size_t total_chars = 0;
  std::vector<double> thoughts;
  std::vector<double> thinks;
  std::map<std::string, std::size_t> verbs;
  for (const SftConversation& c : convs) {
    for (const SftMessage& m : c.messages) {
      if (m.role != Role::Assistant) continue;
      ++examples;
      total_chars += utf8_length(m.text);
      auto thought = first_tag_block(m.text, "thought");
      if (thought) thoughts.push_back(double(utf8_length(*thought)));
      auto think = first_tag_block(m.text, "think");
      if (think) thinks.push_back(double(utf8_length(*think)));
      auto action = first_tag_block(m.text, "action");
      REQUIRE(action.has_value());
      ++verbs[action_verb(parse_action(*action))];
    }
  }
  CHECK(stats.examples == examples);
  CHECK(stats.avg_response_chars == doctest::Approx(double(total_chars) / examples).epsilon(1e-12));
  CHECK(stats.avg_steps == doctest::Approx(double(examples) / convs.size()).epsilon(1e-12));
  CHECK(stats.think_present_rate == doctest::Approx(double(thinks.size()) / examples));
  CHECK(stats.thought_median_chars == lower_median(thoughts));
  CHECK(stats.think_median_chars == lower_median(thinks));
  double fraction_sum = 0.0;
  for (const auto& [verb, fraction] : stats.action_distribution) {
    CHECK(fraction == doctest::Approx(double(verbs.at(verb)) / examples).epsilon(1e-12));
    fraction_sum += fraction;
  }
  CHECK(fraction_sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("truncation cuts reasoning blocks to the limit") {
  SftConversation c;
  c.id = "sft-000001";
  c.task_id = "t";
  c.site = SiteId{"forum"};
  c.messages.push_back({Role::System, "sys", false});
  std::string long_thought(996, 'x');
  c.messages.push_back({Role::User, "obs", false});
  c.messages.push_back({Role::Assistant,
                        "<thought>" + long_thought + "</thought>\n<action>go_back()</action>",
                        true});
  c.steps = 1;
  c.response_chars = {utf8_length(c.messages.back().text)};

  auto truncated =
      transform_reasoning({c}, ReasoningTransform{ReasoningTransform::Kind::Truncate, 500});
  AgentResponse r = parse_agent_response(truncated[0].messages[2].text);
  REQUIRE(r.thought.has_value());
  CHECK(utf8_length(*r.thought) == 500);
  CHECK(truncated[0].response_chars[0] == utf8_length(truncated[0].messages[2].text));
}

TEST_CASE("removal strips reasoning and keeps only the action") {
  SftConversation c = conv_with(3, "sft-000001", "forum");
  auto removed = transform_reasoning({c}, ReasoningTransform{ReasoningTransform::Kind::Remove, 0});
  for (const SftMessage& m : removed[0].messages) {
    if (m.role != Role::Assistant) continue;
    AgentResponse r = parse_agent_response(m.text);
    CHECK(!r.thought.has_value());
    CHECK(!r.think.has_value());
    CHECK(m.text.rfind("<action>", 0) == 0);
  }
}

TEST_CASE("truncate(250) then truncate(500) equals truncate(250)") {
  std::vector<SftConversation> corpus;
  SplitMix64 rng(5150);
  for (int i = 0; i < 20; ++i) {
    SftConversation c;
    c.id = stage_id("sft", i + 1);
    c.task_id = "t";
    c.site = SiteId{"forum"};
    c.messages.push_back({Role::System, "sys", false});
    for (int sidx = 0; sidx < 3; ++sidx) {
      c.messages.push_back({Role::User, "obs", false});
      AgentResponse r{std::string(300 + rng.next_below(900), 'a'),
                      std::string(100 + rng.next_below(600), 'b'), Click{"z"}, ""};
      std::string text = render_agent_response(r);
      c.response_chars.push_back(utf8_length(text));
      c.messages.push_back({Role::Assistant, text, true});
    }
    c.steps = 3;
    corpus.push_back(std::move(c));
  }
  auto t250 = transform_reasoning(corpus, {ReasoningTransform::Kind::Truncate, 250});
  auto t250_then_500 = transform_reasoning(t250, {ReasoningTransform::Kind::Truncate, 500});
  REQUIRE(t250.size() == t250_then_500.size());
  for (std::size_t i = 0; i < t250.size(); ++i) {
    CHECK(serialize_sft_conversation(t250[i]) == serialize_sft_conversation(t250_then_500[i]));
  }
}

TEST_CASE("transform outputs always re-parse") {
  SplitMix64 rng(8);
  std::vector<SftConversation> corpus;
  for (int i = 0; i < 30; ++i) corpus.push_back(conv_with(1 + rng.next_below(5),
                                                          stage_id("sft", i + 1), "forum"));
  for (auto transform : {ReasoningTransform{ReasoningTransform::Kind::Truncate, 10},
                         ReasoningTransform{ReasoningTransform::Kind::Remove, 0}}) {
    for (const SftConversation& c : transform_reasoning(corpus, transform)) {
      for (const SftMessage& m : c.messages) {
        if (m.role == Role::Assistant) CHECK_NOTHROW(parse_agent_response(m.text));
      }
    }
  }
}

TEST_CASE("truncate requires a positive limit") {
  CHECK_THROWS_AS(transform_reasoning({}, {ReasoningTransform::Kind::Truncate, 0}), ConfigError);
}

TEST_CASE("subsample allocates proportionally per site") {
  std::vector<SftConversation> corpus;
  for (int i = 0; i < 60; ++i) corpus.push_back(conv_with(1, stage_id("sft", i + 1), "siteA"));
  for (int i = 0; i < 40; ++i) corpus.push_back(conv_with(1, stage_id("sft", 100 + i), "siteB"));
  std::vector<SftConversation> sample = subsample(corpus, 10, 3);
  REQUIRE(sample.size() == 10);
  std::size_t a = 0;
  std::size_t b = 0;
  for (const SftConversation& c : sample) (c.site.value == "siteA" ? a : b)++;
  CHECK(a == 6);
  CHECK(b == 4);
}

TEST_CASE("subsample with n == corpus size is the identity") {
  std::vector<SftConversation> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back(conv_with(1, stage_id("sft", i + 1), "forum"));
  std::vector<SftConversation> sample = subsample(corpus, 12, 9);
  REQUIRE(sample.size() == 12);
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(sample[i].id == corpus[i].id);
}

TEST_CASE("oversampling is an input error") {
  std::vector<SftConversation> corpus{conv_with(1, "sft-000001", "forum")};
  CHECK_THROWS_AS(subsample(corpus, 2, 0), ConfigError);
}

TEST_CASE("subsample is deterministic and within one of exact proportionality") {
  SplitMix64 rng(606);
  std::vector<SftConversation> corpus;
  std::map<std::string, std::size_t> site_counts;
  const char* sites[] = {"forum", "commerce", "wiki", "admin", "maps"};
  for (int i = 0; i < 400; ++i) {
    std::string site = sites[rng.next_below(5)];
    ++site_counts[site];
    corpus.push_back(conv_with(1, stage_id("sft", i + 1), site));
  }
  for (std::size_t n : {37UL, 100UL, 385UL}) {
    std::vector<SftConversation> first = subsample(corpus, n, 42);
    std::vector<SftConversation> second = subsample(corpus, n, 42);
    REQUIRE(first.size() == n);
    REQUIRE(second.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(first[i].id == second[i].id);

    std::map<std::string, std::size_t> sampled;
    for (const SftConversation& c : first) ++sampled[c.site.value];
    for (const auto& [site, count] : site_counts) {
      double exact = double(n) * double(count) / double(corpus.size());
      CHECK(std::abs(double(sampled[site]) - exact) <= 1.0 + 1e-9);
    }
    // Order preservation: sampled ids appear in corpus order.
    std::size_t cursor = 0;
    for (const SftConversation& c : first) {
      while (cursor < corpus.size() && corpus[cursor].id != c.id) ++cursor;
      CHECK(cursor < corpus.size());
    }
  }
}

TEST_CASE("unfiltered export keeps 2,999 records where filtering keeps 2,322") {
  std::vector<std::pair<SftConversation, Verdict>> judged;
  judged.reserve(2999);
  for (std::size_t i = 0; i < 2999; ++i) {
    Verdict v;
    v.success = i < 2322;
    SftConversation c;
    c.id = stage_id("sft", i + 1);
    c.task_id = "task-000001";
    c.site = SiteId{"forum"};
    c.messages = {{Role::System, "sys", false},
                  {Role::User, "obs", false},
                  {Role::Assistant, "<action>go_back()</action>", true}};
    c.steps = 1;
    c.response_chars = {26};
    judged.emplace_back(std::move(c), v);
  }
  std::string dir = testutil::fresh_dir("webtraj_reference_unfiltered");
  ExportCounts all = export_unfiltered(judged, dir + "/all.jsonl");
  CHECK(all.conversations == 2999);

  std::vector<SftConversation> retained;
  for (const auto& [conv, verdict] : filter_successful(judged)) retained.push_back(conv);
  ExportCounts filtered = export_jsonl(retained, dir + "/filtered.jsonl", ExportMode::Multiturn);
  CHECK(filtered.conversations == 2322);
}

TEST_CASE("export_unfiltered writes every judged record regardless of verdict") {
  std::string dir = testutil::fresh_dir("webtraj_unfiltered");
  std::vector<std::pair<SftConversation, Verdict>> records;
  for (int i = 0; i < 6; ++i) {
    Verdict v;
    v.success = i % 2 == 0;
    records.emplace_back(conv_with(2, stage_id("sft", i + 1), "forum"), v);
  }
  ExportCounts counts = export_unfiltered(records, dir + "/all.jsonl");
  CHECK(counts.conversations == 6);
  CHECK(counts.examples == 12);
  CHECK(read_jsonl(dir + "/all.jsonl").size() == 6);

  // An all-successful corpus exports identically to the filtered view.
  std::vector<std::pair<SftConversation, Verdict>> all_good;
  std::vector<SftConversation> plain;
  for (int i = 0; i < 3; ++i) {
    Verdict v;
    v.success = true;
    SftConversation c = conv_with(1, stage_id("sft", 50 + i), "forum");
    all_good.emplace_back(c, v);
    plain.push_back(c);
  }
  export_unfiltered(all_good, dir + "/good.jsonl");
  export_jsonl(plain, dir + "/filtered.jsonl", ExportMode::Multiturn);
  CHECK(read_text_file(dir + "/good.jsonl") == read_text_file(dir + "/filtered.jsonl"));

  CHECK(export_unfiltered({}, dir + "/none.jsonl").conversations == 0);
}
