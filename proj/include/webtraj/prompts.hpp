#pragma once

#include <string>

namespace webtraj {

/// The three task-authoring requirements handed to the task generator.
struct AnnotatorInstructions {
  std::string abstract_high_level;
  std::string creative;
  std::string template_based;
};

/// Editable text assets used across the pipeline. Defaults are compiled in;
/// load_prompt_assets overrides any file present in the given directory
/// (agent_system.txt, judge_system.txt, exploration_prompt.txt,
/// persona_prompt.txt, annotator_abstract.txt, annotator_creative.txt,
/// annotator_template.txt).
struct PromptAssets {
  std::string agent_system;
  std::string judge_system;
  /// Contains the {{persona_description}} placeholder.
  std::string exploration_template;
  std::string persona_generation;
  AnnotatorInstructions instructions;
};

PromptAssets default_prompt_assets();
PromptAssets load_prompt_assets(const std::string& dir);

/// Writes the default asset files into a directory (used by `assets init`).
void write_default_prompt_assets(const std::string& dir);

}  // namespace webtraj
