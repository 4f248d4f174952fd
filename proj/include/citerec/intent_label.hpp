#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace citerec {

/// Citation function taxonomy: why a sentence cites a paper.
enum class IntentLabel : std::uint8_t {
  kBackground = 0,
  kMethod = 1,
  kComparative = 2,
};

inline constexpr std::size_t kIntentCount = 3;
inline constexpr std::array<IntentLabel, kIntentCount> kAllIntents = {
    IntentLabel::kBackground, IntentLabel::kMethod, IntentLabel::kComparative};

constexpr std::size_t index_of(IntentLabel label) {
  return static_cast<std::size_t>(label);
}

constexpr std::string_view to_string(IntentLabel label) {
  switch (label) {
    case IntentLabel::kBackground: return "background";
    case IntentLabel::kMethod: return "method";
    case IntentLabel::kComparative: return "comparative";
  }
  return "background";
}

/// Case-insensitive; also accepts the SciCite spellings "result" and
/// "comparison" for the comparative class.
std::optional<IntentLabel> parse_intent(std::string_view text);

}  // namespace citerec
