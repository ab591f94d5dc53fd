#include "webtraj/synthesis.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

namespace webtraj {

using ordered_json = nlohmann::ordered_json;

std::string serialize_exploration(const ExplorationTrace& t) {
  ordered_json j;
  j["id"] = t.id;
  j["persona_id"] = t.persona_id;
  j["site"] = t.site.value;
  j["trajectory"] = ordered_json::parse(serialize_trajectory(t.trajectory));
  j["succeeded"] = t.succeeded;
  return j.dump();
}

ExplorationTrace deserialize_exploration(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("bad exploration record: ") + e.what());
  }
  ExplorationTrace t;
  t.id = j.at("id").get<std::string>();
  t.persona_id = j.at("persona_id").get<std::string>();
  t.site.value = j.at("site").get<std::string>();
  t.trajectory = deserialize_trajectory(j.at("trajectory").dump());
  t.succeeded = j.at("succeeded").get<bool>();
  return t;
}

const std::vector<Persona>& builtin_persona_pool() {
  auto make = [](const char* name, const char* s1, const char* s2, const char* s3,
                 const char* i1, const char* i2, const char* i3, const char* desc) {
    return Persona{"", name, {s1, s2, s3}, {i1, i2, i3}, desc};
  };
  static const std::vector<Persona> pool = {
      make("Marcus Webb", "Technical Writing", "API Documentation", "Markdown Tooling",
           "Trail Running", "Coffee Roasting", "Woodworking",
           "Marcus turns sprawling engineering notes into crisp developer guides and spends his "
           "mornings on forest trails before settling in to edit."),
      make("Priya Raghavan", "Supply Chain Analytics", "SQL", "Process Mapping",
           "Tabletop Games", "Urban Gardening", "Documentary Film",
           "Priya untangles logistics data for a mid-size retailer and brings the same patience "
           "to hundred-hour board game campaigns and balcony tomatoes."),
      make("Tomás Herrera", "Frontend Development", "Accessibility Auditing", "CSS Architecture",
           "Street Photography", "Cycling", "Synthesizers",
           "Tomás builds interfaces that screen readers love, photographs his commute, and "
           "patches together modular synth lines on weekends."),
      make("Ingrid Sørensen", "Project Management", "Risk Assessment", "Stakeholder Communication",
           "Sea Kayaking", "Scandinavian Literature", "Bread Baking",
           "Ingrid keeps infrastructure projects on schedule, reads Norwegian novels in the "
           "original, and proofs sourdough on a strict timetable of its own."),
      make("Kofi Mensah", "Financial Modeling", "Spreadsheet Automation", "Forecasting",
           "Chess", "Highlife Music", "Long-Distance Running",
           "Kofi models revenue scenarios for a ride-sharing startup and treats marathon "
           "training plans like another optimization problem."),
      make("Yuki Tanaka", "UX Research", "Usability Testing", "Survey Design",
           "Ceramics", "Birdwatching", "Travel Journaling",
           "Yuki interviews users for a living and keeps meticulous field notebooks, whether the "
           "subject is a checkout flow or a migrating crane."),
      make("Santiago Duarte", "DevOps", "Container Orchestration", "Incident Response",
           "Rock Climbing", "Science Fiction", "Home Brewing",
           "Santiago automates deployment pipelines by day and bouldering problems by night, "
           "with a fermenter bubbling in the garage."),
      make("Alice Chen", "Python Programming", "Data Analysis", "Machine Learning",
           "Robotics", "Hiking", "Sci-Fi Novels",
           "Alice specializes in transforming raw data into actionable intelligence; she spends "
           "weekends building custom robotics projects."),
      make("Liam O'Connor", "Graphic Design", "Adobe Creative Suite", "Typography",
           "Analog Photography", "Indie Music", "Street Art",
           "Liam merges digital precision with physical-world textures, shooting exclusively on "
           "film and collecting vinyl records."),
      make("Dr. Fatima Al-Rashidi", "Bioinformatics", "Statistical Analysis",
           "Laboratory Techniques", "Scientific Illustration", "Mountaineering", "Calligraphy",
           "Fatima bridges computational biology with hands-on lab work, frequently presenting "
           "at international conferences."),
      make("Elena Volkova", "Database Administration", "Query Optimization", "Backup Strategy",
           "Figure Skating", "Mystery Novels", "Orchid Cultivation",
           "Elena keeps mission-critical databases humming and applies the same care to a "
           "windowsill of temperamental orchids."),
      make("Ahmed Khalil", "Cybersecurity", "Penetration Testing", "Network Analysis",
           "Drone Racing", "Arabic Poetry", "Speedcubing",
           "Ahmed probes corporate networks for weaknesses under contract and relaxes by racing "
           "quadcopters through abandoned warehouses."),
      make("Grace Kimathi", "Content Strategy", "SEO", "Copy Editing",
           "Marathon Running", "Podcasting", "Watercolor Painting",
           "Grace plans editorial calendars for a travel platform and hosts a small podcast "
           "about East African running culture."),
      make("Henrik Dalgaard", "Mechanical Engineering", "CAD Modeling", "Prototyping",
           "Sailing", "Jazz Piano", "Antique Restoration",
           "Henrik designs precision valves, sails a restored wooden dinghy, and believes every "
           "hinge deserves a second life."),
      make("Mei-Ling Wu", "Product Management", "Roadmap Planning", "A/B Testing",
           "Badminton", "Calligraphy", "Dim Sum Cooking",
           "Mei-Ling ships features for a productivity suite and runs experiments with the same "
           "rigor she applies to her grandmother's dumpling recipes."),
      make("Oluwaseun Adeyemi", "Cloud Architecture", "Cost Optimization", "Terraform",
           "Afrobeat Drumming", "Chess", "Street Food Touring",
           "Oluwaseun redesigns cloud estates to cost half as much and drums in a weekend "
           "Afrobeat collective."),
      make("Johanna Fischer", "Quality Assurance", "Test Automation", "Bug Triage",
           "Alpine Hiking", "Crossword Puzzles", "Cheese Making",
           "Johanna writes regression suites that catch what code review misses and ages small "
           "batches of alpine cheese in her cellar."),
      make("Ravi Subramanian", "Data Engineering", "Stream Processing", "Schema Design",
           "Cricket", "Carnatic Music", "Astronomy",
           "Ravi builds pipelines that move billions of events a day and spends clear nights "
           "with a telescope on the roof."),
      make("Camille Moreau", "Digital Marketing", "Campaign Analytics", "Email Automation",
           "Wine Tasting", "Flea Markets", "Ballet",
           "Camille tunes acquisition funnels for a subscription service and hunts for "
           "mid-century lamps on Sunday mornings."),
      make("Piotr Nowak", "Embedded Systems", "C Programming", "Hardware Debugging",
           "Amateur Radio", "Mushroom Foraging", "Ice Hockey",
           "Piotr writes firmware for industrial sensors and keeps a logbook of every mushroom "
           "and every contact he has ever found."),
      make("Aisha Okafor", "Human Resources", "Recruiting", "Policy Writing",
           "Salsa Dancing", "True Crime Podcasts", "Container Gardening",
           "Aisha builds hiring processes people actually enjoy and dances competitively in a "
           "regional salsa league."),
      make("Lars Eriksen", "Sales Engineering", "Demo Design", "CRM Administration",
           "Fly Fishing", "Lego Architecture", "Nordic Skiing",
           "Lars translates product capabilities into customer pilots and recreates famous "
           "buildings in brick over long winters."),
      make("Nadia Petrova", "Technical Support", "Troubleshooting", "Knowledge Base Curation",
           "Aerial Yoga", "Graphic Novels", "Beekeeping",
           "Nadia turns angry tickets into documentation improvements and tends two hives on a "
           "cooperative rooftop."),
      make("Diego Fernández", "Business Intelligence", "Dashboard Design", "ETL Pipelines",
           "Futsal", "Vinyl Collecting", "Asado Cooking",
           "Diego distills operations data into dashboards executives actually read and hosts "
           "weekend asados for his futsal team."),
  };
  return pool;
}

std::vector<Persona> generate_personas_builtin(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("persona count must be >= 1");
  const std::vector<Persona>& pool = builtin_persona_pool();
  std::vector<Persona> out;
  out.reserve(n);
  std::size_t start = static_cast<std::size_t>(seed % pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    Persona p = pool[(start + i) % pool.size()];
    std::size_t cycle = i / pool.size();
    if (cycle > 0) p.name += " #" + std::to_string(cycle + 1);
    p.id = stage_id("persona", i + 1);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::vector<std::string> split_semicolons(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ';') {
      std::string part = trim(text.substr(start, i - start));
      if (!part.empty()) parts.push_back(std::move(part));
      start = i + 1;
    }
  }
  return parts;
}

std::optional<Persona> parse_persona_reply(const std::string& reply) {
  auto name = first_tag_block(reply, "name");
  auto skills = first_tag_block(reply, "skills");
  auto interests = first_tag_block(reply, "interests");
  auto description = first_tag_block(reply, "description");
  if (!name || !skills || !interests || !description) return std::nullopt;
  Persona p;
  p.name = trim(*name);
  p.skills = split_semicolons(*skills);
  p.interests = split_semicolons(*interests);
  p.description = trim(*description);
  if (p.name.empty() || p.skills.size() != 3 || p.interests.size() != 3) return std::nullopt;
  return p;
}

}  // namespace

std::vector<Persona> generate_personas(std::size_t n, Backend& backend,
                                       const PersonaGenOptions& options) {
  if (n < 1) throw ConfigError("persona count must be >= 1");
  std::vector<Persona> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::optional<Persona> persona;
    for (int ask = 1; ask <= options.retries; ++ask) {
      std::string prompt = options.prompt + "\n\nPersona " + std::to_string(i + 1) + " of " +
                           std::to_string(n) + ". Attempt " + std::to_string(ask) + ".";
      std::vector<ChatMessage> messages{{Role::User, prompt, {}}};
      std::string reply =
          with_retries([&] { return backend.chat(messages, options.gen); },
                       RetryPolicy{options.retries, 0, 0, 0, nullptr})
              .value;
      persona = parse_persona_reply(reply);
      if (persona) break;
    }
    if (!persona) {
      throw Error("persona generation failed the 3+3 shape check after " +
                  std::to_string(options.retries) + " attempts");
    }
    persona->id = stage_id("persona", i + 1);
    out.push_back(std::move(*persona));
  }
  return out;
}

ExplorationTrace explore(const Persona& persona, const SiteSpec& spec, Backend& backend,
                         const TokenBudget& budget, const ExploreOptions& options) {
  std::string goal = instantiate_template(options.exploration_template,
                                          {{"persona_description", persona.description}});
  AgentTask task{options.exploration_id, spec.site, goal};

  EpisodeOptions episode;
  episode.trajectory_id = options.exploration_id;
  episode.system_prompt = options.agent_system_prompt;
  episode.gen = options.gen;
  episode.max_retries = options.max_retries;
  episode.step_limit_override = options.step_limit;

  ExplorationTrace trace;
  trace.id = options.exploration_id;
  trace.persona_id = persona.id;
  trace.site = spec.site;
  trace.trajectory = run_episode(backend, task, spec, budget, episode);
  trace.succeeded = check_exploration_success(trace);
  return trace;
}

bool check_exploration_success(const ExplorationTrace& trace) {
  const Trajectory& traj = trace.trajectory;
  if (traj.terminal.kind != TerminalKind::Message) return false;
  if (traj.terminal.message.find(kExplorationDoneSentence) == std::string::npos) return false;
  // The final step carries the message itself; steps before it must reach
  // the exploration minimum.
  return traj.steps.size() >= kExplorationMinSteps + 1;
}

std::string instantiate_template(const std::string& tmpl,
                                 const std::map<std::string, std::string>& bindings) {
  auto is_name_char = [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  };
  for (const auto& [name, value] : bindings) {
    if (value.find("{{") != std::string::npos) {
      throw TemplateError(name, "binding '" + name + "' would introduce a new placeholder");
    }
  }

  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      std::size_t name_start = i + 2;
      std::size_t j = name_start;
      while (j < tmpl.size() && is_name_char(tmpl[j])) ++j;
      bool closed = j + 1 < tmpl.size() && tmpl[j] == '}' && tmpl[j + 1] == '}';
      if (j == name_start || !closed) {
        throw TemplateError(tmpl.substr(i, std::min<std::size_t>(12, tmpl.size() - i)),
                            "malformed placeholder near '" +
                                tmpl.substr(i, std::min<std::size_t>(12, tmpl.size() - i)) + "'");
      }
      std::string name = tmpl.substr(name_start, j - name_start);
      auto it = bindings.find(name);
      if (it == bindings.end()) {
        throw TemplateError(name, "unbound placeholder '" + name + "'");
      }
      out += it->second;
      i = j + 2;
    } else {
      out.push_back(tmpl[i]);
      ++i;
    }
  }
  return out;
}

std::vector<std::size_t> select_anchor_steps(std::size_t trace_length, std::size_t k) {
  if (k > trace_length) {
    throw ConfigError("cannot pick " + std::to_string(k) + " anchors from a " +
                      std::to_string(trace_length) + "-step trace");
  }
  std::vector<std::size_t> anchors;
  anchors.reserve(k);
  for (std::size_t i = 1; i <= k; ++i) {
    std::size_t anchor = i * trace_length / (k + 1);
    // Collisions only arise when L < 2(k+1); bumping upward stays below L
    // because floor(i*L/(k+1)) >= i-1 leaves room for the remaining slots.
    if (!anchors.empty() && anchor <= anchors.back()) anchor = anchors.back() + 1;
    anchors.push_back(anchor);
  }
  return anchors;
}

std::string compose_synthesis_prompt(const ExplorationTrace& trace, const Persona& persona,
                                     const AnnotatorInstructions& instructions,
                                     std::size_t anchor_step, int ask_attempt) {
  std::string prompt;
  prompt += "You explored a website and will now design one task for it.\n\n";
  prompt += "Site: " + trace.site.value + "\n\n";
  prompt += "Persona: " + persona.name + "\n";
  prompt += persona.description + "\n";
  prompt += "Skills: ";
  for (std::size_t i = 0; i < persona.skills.size(); ++i) {
    if (i > 0) prompt += ", ";
    prompt += persona.skills[i];
  }
  prompt += "\nInterests: ";
  for (std::size_t i = 0; i < persona.interests.size(); ++i) {
    if (i > 0) prompt += ", ";
    prompt += persona.interests[i];
  }
  prompt += "\n\nTask requirements:\n";
  prompt += "1. " + instructions.abstract_high_level + "\n";
  prompt += "2. " + instructions.creative + "\n";
  prompt += "3. " + instructions.template_based + "\n\n";

  std::size_t prefix_len = std::min(anchor_step + 1, trace.trajectory.steps.size());
  prompt += "Exploration prefix (first " + std::to_string(prefix_len) + " steps of " +
            std::to_string(trace.trajectory.steps.size()) + "):\n";
  for (std::size_t i = 0; i < prefix_len; ++i) {
    const Step& step = trace.trajectory.steps[i];
    prompt += "Step " + std::to_string(i) + " at " + step.observation.url + ": " +
              render_action(step.executed) + "\n";
  }

  prompt +=
      "\nReply with exactly one task in this format:\n"
      "<template>intent text with {{variable}} placeholders</template>\n"
      "<bindings>variable=value; other=value</bindings>\n"
      "<hint>how a reviewer can verify the task succeeded</hint>\n"
      "Give at least one <hint> block; repeat the tag for multiple hints.\n";
  if (ask_attempt > 1) {
    prompt += "Attempt " + std::to_string(ask_attempt) +
              ": your previous intent duplicated another task or was malformed; produce a "
              "different one.\n";
  }
  return prompt;
}

namespace {

std::map<std::string, std::string> parse_bindings(const std::string& text) {
  std::map<std::string, std::string> bindings;
  for (const std::string& part : split_semicolons(text)) {
    std::size_t eq = part.find('=');
    if (eq == std::string::npos) continue;
    std::string name = trim(part.substr(0, eq));
    std::string value = trim(part.substr(eq + 1));
    if (!name.empty()) bindings[name] = value;
  }
  return bindings;
}

}  // namespace

TaskSynthesisResult synthesize_tasks(const ExplorationTrace& trace, const Persona& persona,
                                     const AnnotatorInstructions& instructions, Backend& backend,
                                     std::size_t k, const SynthesizeOptions& options) {
  if (!trace.succeeded) throw ConfigError("task synthesis requires a succeeded exploration");
  if (trace.trajectory.steps.size() < k) {
    throw ConfigError("exploration " + trace.id + " is too short for k=" + std::to_string(k));
  }

  TaskSynthesisResult result;
  std::set<std::string> seen_intents;
  std::vector<std::size_t> anchors = select_anchor_steps(trace.trajectory.steps.size(), k);

  for (std::size_t anchor : anchors) {
    bool produced = false;
    std::string failure = "no reply";
    for (int ask = 1; ask <= options.retries && !produced; ++ask) {
      std::string prompt = compose_synthesis_prompt(trace, persona, instructions, anchor, ask);
      std::vector<ChatMessage> messages{{Role::User, prompt, {}}};
      std::string reply;
      try {
        reply = with_retries([&] { return backend.chat(messages, options.gen); },
                             RetryPolicy{options.retries, 0, 0, 0, nullptr})
                    .value;
      } catch (const std::exception& e) {
        failure = e.what();
        break;
      }

      auto template_text = first_tag_block(reply, "template");
      std::vector<std::string> hints = all_tag_blocks(reply, "hint");
      if (!template_text || trim(*template_text).empty() || hints.empty()) {
        failure = "reply missing template or hints";
        continue;
      }
      std::map<std::string, std::string> bindings =
          parse_bindings(first_tag_block(reply, "bindings").value_or(""));

      TaskSpec spec;
      spec.site = trace.site;
      spec.persona_id = persona.id;
      spec.intent_template = trim(*template_text);
      spec.bindings = bindings;
      try {
        spec.intent = instantiate_template(spec.intent_template, spec.bindings);
      } catch (const TemplateError& e) {
        failure = e.what();
        continue;
      }
      for (std::string& hint : hints) hint = trim(hint);
      spec.hints = std::move(hints);
      spec.anchor_step = anchor;
      spec.source_exploration_id = trace.id;

      if (!seen_intents.insert(normalize_intent(spec.intent)).second) {
        failure = "duplicate intent after normalization";
        continue;
      }
      result.tasks.push_back(std::move(spec));
      produced = true;
    }
    if (!produced) {
      result.anchor_errors.push_back("anchor " + std::to_string(anchor) + ": " + failure);
    }
  }
  return result;
}

}  // namespace webtraj
