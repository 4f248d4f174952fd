#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "citerec/rerank.hpp"

namespace citerec {

/// One request line: {"id", "citing_abstract", "context", "intent",
/// "candidate_abstract"}.
std::string encode_scorer_request(const RerankInput& input, std::uint64_t id);

/// Accepts {"score": x} with x a number in [0, 1]; anything else is nullopt.
std::optional<double> decode_scorer_response(std::string_view line);

/// Runs a scorer executable as a child process and talks to it over its
/// stdin/stdout, one JSON request and one JSON response per line. Calls are
/// serialized. A timeout or malformed reply fails only that candidate; if the
/// child exits, every later call fails.
class ExternalProcessScorer final : public CandidateScorer {
 public:
  ExternalProcessScorer(std::vector<std::string> argv, std::chrono::milliseconds timeout);
  ~ExternalProcessScorer() override;

  ExternalProcessScorer(const ExternalProcessScorer&) = delete;
  ExternalProcessScorer& operator=(const ExternalProcessScorer&) = delete;

  std::optional<double> score(const RerankInput& input) override;

  std::size_t failures() const { return failures_; }

 private:
  std::optional<std::string> read_line(std::chrono::steady_clock::time_point deadline);

  std::mutex mutex_;
  int pid_ = -1;
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
  std::uint64_t next_id_ = 1;
  std::size_t failures_ = 0;
  bool broken_ = false;
};

}  // namespace citerec
