#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citerec/chat_client.hpp"
#include "citerec/intent_label.hpp"

namespace citerec {

/// Rubric weights as published. The composite divides by their total.
struct DimensionWeights {
  double purpose = 0.35;
  double accuracy = 0.25;
  double context_fit = 0.25;
  double density = 0.20;

  constexpr double total() const { return purpose + accuracy + context_fit + density; }
  /// Weights scaled to sum to 1.
  constexpr DimensionWeights normalized() const {
    const double t = total();
    return {purpose / t, accuracy / t, context_fit / t, density / t};
  }
};

inline constexpr DimensionWeights kRubricWeights{};

struct CitevalScores {
  double purpose = 0.0;
  double accuracy = 0.0;
  double context_fit = 0.0;
  double density = 0.0;

  friend bool operator==(const CitevalScores&, const CitevalScores&) = default;
};

/// Weighted average of the four scores. Throws std::invalid_argument for a
/// score outside [0, 100] or invalid weights.
double composite_score(const CitevalScores& scores, const DimensionWeights& weights = kRubricWeights);

struct CitevalReport {
  CitevalScores scores;
  double composite = 0.0;
  std::array<std::string, 4> rationale;

  friend bool operator==(const CitevalReport&, const CitevalReport&) = default;
};

CitevalReport make_report(const CitevalScores& scores, const DimensionWeights& weights = kRubricWeights);

struct JudgeInputs {
  std::string citing_abstract;
  std::string context;
  IntentLabel intent = IntentLabel::kBackground;
  std::string cited_abstract;
  std::string citation;
};

std::string build_judge_prompt(const JudgeInputs& inputs);

/// Finds a JSON object with integer purpose, accuracy, context_fit and
/// density in [0, 100], allowing prose or code fences around it.
std::optional<CitevalScores> parse_judge_response(std::string_view raw);

/// Token-overlap heuristics, not a semantic judgement:
/// purpose = 100 F1(citation, citing abstract),
/// accuracy = 100 F1(citation, cited abstract),
/// context_fit = 100 F1(citation, context),
/// density = 100 distinct / total citation tokens.
CitevalReport stub_judge(const JudgeInputs& inputs);

/// Judge reply in the response schema, as a remote judge would send it.
std::string stub_judge_response(const JudgeInputs& inputs);

double pearson_r(std::span<const double> x, std::span<const double> y);

struct JudgeExchange {
  std::string prompt;
  std::string raw_response;
  std::optional<CitevalReport> report;
  int attempts = 0;
  std::string error;
};

struct JudgeRunOptions {
  int max_attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::size_t max_in_flight = 4;
  std::optional<std::filesystem::path> audit_log;
};

struct JudgeRun {
  std::vector<JudgeExchange> exchanges;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  /// Mean of each dimension and of the composite over successful exchanges.
  std::optional<CitevalReport> mean;
};

/// Produces a raw judge reply for one request. Throwing marks the attempt
/// as failed.
using JudgeFn = std::function<std::string(const JudgeInputs& inputs, const std::string& prompt)>;

JudgeFn stub_judge_fn();
/// Sends the prompt through `complete` (e.g. remote_completion).
JudgeFn completion_judge_fn(CompletionFn complete);

/// Runs every request through `judge`, retrying thrown errors and
/// unparseable replies with exponential backoff. Exchange order matches
/// input order; at most `max_in_flight` requests run at once.
JudgeRun run_judge(std::span<const JudgeInputs> inputs, const JudgeFn& judge,
                   const JudgeRunOptions& options = {});

std::string report_to_json(const CitevalReport& report);

}  // namespace citerec
