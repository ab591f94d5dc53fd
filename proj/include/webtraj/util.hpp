#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace webtraj {

// Deterministic, platform-independent RNG. std::shuffle and friends are
// implementation-defined across standard libraries, so everything that has
// to be byte-reproducible goes through this instead.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform value in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);

  /// Uniform double in [0, 1).
  double next_unit();

 private:
  std::uint64_t state_;
};

std::uint64_t fnv1a64(std::string_view data);

/// Fisher-Yates shuffle driven by SplitMix64; stable across platforms.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(items[i - 1], items[j]);
  }
}

/// Number of Unicode scalar values in a UTF-8 string (continuation bytes
/// are not counted). Invalid bytes count as one scalar each.
std::size_t utf8_length(std::string_view text);

/// Prefix of `text` holding at most `count` Unicode scalar values, cut on a
/// scalar boundary.
std::string utf8_prefix(std::string_view text, std::size_t count);

std::string to_lower(std::string_view text);

/// Lowercase, punctuation stripped, runs of whitespace collapsed to one
/// space, leading/trailing space removed.
std::string normalize_intent(std::string_view text);

std::string trim(std::string_view text);

std::vector<std::string> split_lines(std::string_view text);

bool starts_with(std::string_view text, std::string_view prefix);

/// Zero-padded stage-scoped identifier, e.g. stage_id("task", 7) == "task-000007".
std::string stage_id(std::string_view stage, std::size_t counter);

/// Content of the first <tag>...</tag> block; tags are matched exactly and
/// case-sensitively, later duplicates are ignored.
std::optional<std::string> first_tag_block(std::string_view text, std::string_view tag);

/// Contents of every <tag>...</tag> block, in order.
std::vector<std::string> all_tag_blocks(std::string_view text, std::string_view tag);

/// Lower median of a sorted-or-not vector (even count picks the lower of the
/// two middle elements). Empty input yields 0.
double lower_median(std::vector<double> values);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace webtraj
