#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "webtraj/backend.hpp"
#include "webtraj/prompts.hpp"
#include "webtraj/sim_env.hpp"
#include "webtraj/trace.hpp"

namespace webtraj {

/// Exact sentence a finished exploration must send to the user.
inline const std::string kExplorationDoneSentence = "I am done exploring the websites.";

/// Default cap on exploration episode length.
inline constexpr std::size_t kExplorationStepLimit = 20;

/// Minimum environment steps before the termination message counts.
inline constexpr std::size_t kExplorationMinSteps = 10;

struct ExplorationTrace {
  std::string id;
  std::string persona_id;
  SiteId site;
  Trajectory trajectory;
  bool succeeded = false;
};

std::string serialize_exploration(const ExplorationTrace& t);
ExplorationTrace deserialize_exploration(const std::string& line);

// --- persona generation -----------------------------------------------------

/// Bundled pool backing builtin persona mode.
const std::vector<Persona>& builtin_persona_pool();

/// Deterministic sample of n personas from the builtin pool: entries are
/// taken cyclically starting at seed % pool size, with a numeric name
/// suffix from the second cycle on. Ids are assigned in order.
std::vector<Persona> generate_personas_builtin(std::size_t n, std::uint64_t seed);

struct PersonaGenOptions {
  std::string prompt;  // persona-generation prompt asset
  GenParams gen;
  int retries = 10;
};

/// Backend persona mode: prompts the model once per persona and parses the
/// <name>/<skills>/<interests>/<description> reply, re-asking on shape
/// violations up to `retries` times before failing.
std::vector<Persona> generate_personas(std::size_t n, Backend& backend,
                                       const PersonaGenOptions& options);

// --- exploration --------------------------------------------------------------

struct ExploreOptions {
  std::string exploration_id;
  std::string exploration_template;  // carries {{persona_description}}
  std::string agent_system_prompt;
  GenParams gen;
  int max_retries = 10;
  std::size_t step_limit = kExplorationStepLimit;
};

/// Runs one persona-conditioned exploration episode. env_error terminals
/// are kept with succeeded=false.
ExplorationTrace explore(const Persona& persona, const SiteSpec& spec, Backend& backend,
                         const TokenBudget& budget, const ExploreOptions& options);

/// True iff the trace ended in a user message containing the exact
/// termination sentence after at least kExplorationMinSteps environment
/// steps.
bool check_exploration_success(const ExplorationTrace& trace);

// --- task synthesis -------------------------------------------------------------

/// Substitutes every {{name}} placeholder ([a-z0-9_]+ names). Unbound or
/// malformed placeholders raise TemplateError naming the variable; binding
/// values may not introduce new placeholders.
std::string instantiate_template(const std::string& tmpl,
                                 const std::map<std::string, std::string>& bindings);

/// Evenly spread anchor step indices: floor(i*L/(k+1)) for i=1..k, bumped
/// upward on collision. Requires k <= L.
std::vector<std::size_t> select_anchor_steps(std::size_t trace_length, std::size_t k);

struct SynthesizeOptions {
  GenParams gen;
  int retries = 10;
};

struct TaskSynthesisResult {
  std::vector<TaskSpec> tasks;  // ids left empty; the pipeline numbers them
  std::vector<std::string> anchor_errors;
};

/// Prompts the backend once per anchor with the persona, the annotator
/// instructions, and the exploration prefix up to that anchor, parses the
/// <template>/<bindings>/<hint> reply, and instantiates the template.
/// Duplicate intents (normalized) trigger regeneration; anchors that stay
/// malformed after `retries` asks are reported in anchor_errors without
/// affecting their siblings.
TaskSynthesisResult synthesize_tasks(const ExplorationTrace& trace, const Persona& persona,
                                     const AnnotatorInstructions& instructions, Backend& backend,
                                     std::size_t k, const SynthesizeOptions& options);

/// The synthesis prompt for one anchor, exposed for fixtures and tests.
std::string compose_synthesis_prompt(const ExplorationTrace& trace, const Persona& persona,
                                     const AnnotatorInstructions& instructions,
                                     std::size_t anchor_step, int ask_attempt);

}  // namespace webtraj
