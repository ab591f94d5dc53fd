#include "webtraj/prompts.hpp"

#include <filesystem>

#include "webtraj/util.hpp"

namespace webtraj {

namespace {

const char* kAgentSystem =
    R"(You are a web agent. At each turn you receive the task goal, the current page URL, your previous action, and an accessibility tree of the page in which interactive elements carry [bid] identifiers.

Reply with your strategic reasoning in a <thought>...</thought> block, optional step-by-step deliberation in a <think>...</think> block, and exactly one action in an <action>...</action> block.

Available actions:
  click("bid")
  fill("bid", "text")
  select_option("bid", "option")
  scroll(dx, dy)
  keyboard_press("key")
  hover("bid")
  goto("url")
  go_back()
  send_msg_to_user("text")

String arguments are double-quoted; escape embedded quotes and backslashes with a backslash. Use send_msg_to_user to report results or signal completion.)";

const char* kJudgeSystem =
    R"(You are an evaluator of web-agent trajectories. You receive a task goal (possibly with evaluation hints), the step-by-step interaction record with URLs and the agent's reasoning, and the final page's accessibility tree.

Answer every question using only the requested tag, choosing exactly one of the listed options verbatim. Consider the listed issues carefully before deciding on overall success.)";

const char* kExplorationTemplate =
    R"(You have been instructed to explore the websites in order to familiarize yourself with their content and functionalities. When you are done, you should reply to the user with a message indicating that you are done exploring the websites: 'I am done exploring the websites.' Make sure to explore for at least 10 steps before you stop.

You have been given the following persona: {{persona_description}})";

const char* kPersonaGeneration =
    R"(Invent one realistic user persona for web-usage studies. Reply with exactly these blocks:
<name>full display name</name>
<skills>skill 1; skill 2; skill 3</skills>
<interests>interest 1; interest 2; interest 3</interests>
<description>a short paragraph covering professional background, personality, and how the interests connect to web activities</description>

Give exactly three skills and exactly three interests. Avoid repeating personas you produced earlier in this session.)";

const char* kAnnotatorAbstract =
    R"(Abstract and high-level: every intent must take several actions to carry out, not one or two clicks. Prefer goals like posting a message in a named section over goals like clicking a single link.)";

const char* kAnnotatorCreative =
    R"(Creative: avoid stock chores such as plain account creation. Add a constraint or a twist drawn from the persona so the intent is unlikely to repeat across annotators.)";

const char* kAnnotatorTemplate =
    R"(Template-based with variables: write the intent as a template whose replaceable parts are marked {{variable_name}} (lowercase names), and supply one concrete value per variable so the template instantiates to a specific task.)";

std::string read_override(const std::filesystem::path& dir, const char* file,
                          const std::string& fallback) {
  std::filesystem::path path = dir / file;
  std::error_code ec;
  if (std::filesystem::exists(path, ec)) return read_text_file(path.string());
  return fallback;
}

}  // namespace

PromptAssets default_prompt_assets() {
  PromptAssets assets;
  assets.agent_system = kAgentSystem;
  assets.judge_system = kJudgeSystem;
  assets.exploration_template = kExplorationTemplate;
  assets.persona_generation = kPersonaGeneration;
  assets.instructions = {kAnnotatorAbstract, kAnnotatorCreative, kAnnotatorTemplate};
  return assets;
}

PromptAssets load_prompt_assets(const std::string& dir) {
  PromptAssets assets = default_prompt_assets();
  std::filesystem::path base(dir);
  assets.agent_system = read_override(base, "agent_system.txt", assets.agent_system);
  assets.judge_system = read_override(base, "judge_system.txt", assets.judge_system);
  assets.exploration_template =
      read_override(base, "exploration_prompt.txt", assets.exploration_template);
  assets.persona_generation =
      read_override(base, "persona_prompt.txt", assets.persona_generation);
  assets.instructions.abstract_high_level =
      read_override(base, "annotator_abstract.txt", assets.instructions.abstract_high_level);
  assets.instructions.creative =
      read_override(base, "annotator_creative.txt", assets.instructions.creative);
  assets.instructions.template_based =
      read_override(base, "annotator_template.txt", assets.instructions.template_based);
  return assets;
}

void write_default_prompt_assets(const std::string& dir) {
  std::filesystem::create_directories(dir);
  PromptAssets assets = default_prompt_assets();
  std::filesystem::path base(dir);
  write_text_file((base / "agent_system.txt").string(), assets.agent_system);
  write_text_file((base / "judge_system.txt").string(), assets.judge_system);
  write_text_file((base / "exploration_prompt.txt").string(), assets.exploration_template);
  write_text_file((base / "persona_prompt.txt").string(), assets.persona_generation);
  write_text_file((base / "annotator_abstract.txt").string(),
                  assets.instructions.abstract_high_level);
  write_text_file((base / "annotator_creative.txt").string(), assets.instructions.creative);
  write_text_file((base / "annotator_template.txt").string(), assets.instructions.template_based);
}

}  // namespace webtraj
