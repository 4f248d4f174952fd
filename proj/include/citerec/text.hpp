#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace citerec {

/// Lowercased alphanumeric runs of `text`, in order.
std::vector<std::string> word_tokens(std::string_view text);

/// Distinct lowercased alphanumeric tokens.
std::set<std::string> token_set(std::string_view text);

/// Dice/F1 overlap of two token sets: 2|A n B| / (|A| + |B|). Zero when both are empty.
double overlap_f1(const std::set<std::string>& a, const std::set<std::string>& b);

/// 64-bit FNV-1a. Stable across platforms, used for hashed vocabularies.
std::uint64_t fnv1a64(std::string_view bytes);

std::string to_lower(std::string_view text);

/// Receives non-fatal diagnostics from loaders and builders.
using WarningSink = std::function<void(std::string_view)>;

}  // namespace citerec
