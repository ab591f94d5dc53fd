#pragma once

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "webtraj/action.hpp"
#include "webtraj/util.hpp"

namespace testutil {

inline std::string repo_path(const std::string& rel) {
  return std::string(WEBTRAJ_SOURCE_DIR) + "/" + rel;
}

inline std::string fresh_dir(const std::string& name) {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Characters that stress quoting and UTF-8 handling.
inline std::string random_text(webtraj::SplitMix64& rng, std::size_t max_len) {
  static const std::vector<std::string> atoms = {
      "a", "b", "Z", "0", "9", " ", "_", "-", "\"", "\\", "(", ")", ",", "\n",
      "'", "<", ">", "/", "\xC3\xA9", "\xE2\x82\xAC", "\xF0\x9F\x99\x82"};
  std::size_t len = rng.next_below(max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) out += atoms[rng.next_below(atoms.size())];
  return out;
}

inline std::string random_bid(webtraj::SplitMix64& rng) {
  std::string out = "b";
  std::size_t len = 1 + rng.next_below(4);
  for (std::size_t i = 0; i < len; ++i) {
    out += static_cast<char>('a' + rng.next_below(26));
  }
  return out;
}

inline webtraj::Action random_action(webtraj::SplitMix64& rng) {
  switch (rng.next_below(9)) {
    case 0: return webtraj::Click{random_bid(rng)};
    case 1: return webtraj::Fill{random_bid(rng), random_text(rng, 30)};
    case 2: return webtraj::SelectOption{random_bid(rng), random_text(rng, 12)};
    case 3:
      return webtraj::Scroll{static_cast<long long>(rng.next_below(4001)) - 2000,
                             static_cast<long long>(rng.next_below(4001)) - 2000};
    case 4: return webtraj::KeyboardPress{random_text(rng, 8)};
    case 5: return webtraj::Hover{random_bid(rng)};
    case 6: return webtraj::Goto{"sim://site/" + random_bid(rng)};
    case 7: return webtraj::GoBack{};
    default: return webtraj::SendMsgToUser{random_text(rng, 40)};
  }
}

// Block text valid for round-tripping: must not embed any recognized tag.
inline std::string random_block_text(webtraj::SplitMix64& rng, std::size_t max_len) {
  std::string out = random_text(rng, max_len);
  for (const char* tag : {"<thought>", "</thought>", "<think>", "</think>", "<action>",
                          "</action>"}) {
    std::size_t pos;
    while ((pos = out.find(tag)) != std::string::npos) out.erase(pos, std::strlen(tag));
  }
  return out;
}

inline webtraj::AgentResponse random_response(webtraj::SplitMix64& rng) {
  webtraj::AgentResponse r{std::nullopt, std::nullopt, random_action(rng), ""};
  if (rng.next_below(4) != 0) r.thought = random_block_text(rng, 60);
  if (rng.next_below(2) == 0) r.think = random_block_text(rng, 40);
  return r;
}

}  // namespace testutil
