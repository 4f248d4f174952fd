#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/encoder.hpp"
#include "citerec/graph.hpp"

namespace citerec {

struct RankedEntry {
  PaperId id;
  double score = 0.0;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

/// Higher score first; equal scores by ascending id.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

class RankedList {
 public:
  RankedList() = default;

  /// Sorts into canonical order and keeps the first `limit` entries.
  /// Throws std::invalid_argument on duplicate ids.
  static RankedList from_scores(std::vector<RankedEntry> entries,
                                std::size_t limit = static_cast<std::size_t>(-1));

  /// Keeps the given order as-is (used when a reranker leaves unscored
  /// candidates in their prior order).
  static RankedList from_ordered(std::vector<RankedEntry> entries);

  const std::vector<RankedEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const RankedEntry& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// 1-based rank of `id`, if present.
  std::optional<std::size_t> rank_of(const PaperId& id) const;

  /// Scores non-increasing, ties by ascending id, no duplicates.
  bool is_canonical() const;

  friend bool operator==(const RankedList&, const RankedList&) = default;

 private:
  std::vector<RankedEntry> entries_;
};

/// Searchable store: one unit-norm embedding row per corpus paper, in
/// ascending id order, plus the citation graph and the encoder that produced
/// the rows.
struct DocumentIndex {
  Corpus corpus;
  std::vector<PaperId> ids;
  std::size_t dim = 0;
  std::vector<float> embeddings;
  CitationGraph graph;
  EncoderWeights encoder;

  std::span<const float> row(std::size_t i) const {
    return std::span(embeddings).subspan(i * dim, dim);
  }
  std::optional<std::size_t> row_of(const PaperId& id) const;
};

bool operator==(const DocumentIndex& a, const DocumentIndex& b);

/// Embeds every paper with an empty context paragraph.
DocumentIndex build_index(const Corpus& corpus, EncoderWeights encoder,
                          const WarningSink& warn = {});

/// Exact top-k by cosine similarity over a full scan. k larger than the
/// index returns everything and warns.
RankedList knn(std::span<const double> query, const DocumentIndex& index, std::size_t k,
               const WarningSink& warn = {});

/// Weights of the encoder and CF terms in the fused recall score.
struct FusionWeights {
  double encoder = 0.8;
  double cf = 0.2;

  /// Throws std::invalid_argument unless both are >= 0 and sum to 1 within 1e-9.
  void validate() const;
};

struct RecallOptions {
  FusionWeights fusion;
  double alpha = 0.5;
  std::size_t k = 2000;
  /// Ignore the citing paper's own edges in the graph during CF scoring.
  bool hide_citing_paper = true;
};

/// Per-candidate pieces of the fused score, min-max normalized over the pool.
struct RecallBreakdown {
  std::vector<PaperId> pool;
  std::vector<double> encoder;
  std::vector<double> cf;
  std::vector<double> fused;
};

Eigen::RowVectorXd embed_query(const CitationQuery& query, const DocumentIndex& index);

/// Candidate pool = corpus papers minus the citing paper and the profile.
RecallBreakdown recall_breakdown(const CitationQuery& query, const DocumentIndex& index,
                                 const RecallOptions& options);

RankedList recall(const CitationQuery& query, const DocumentIndex& index,
                  const RecallOptions& options);

/// Runs recall for every query on `threads` workers. Output order matches
/// input order and does not depend on the thread count.
std::vector<RankedList> recall_all(std::span<const CitationQuery> queries,
                                   const DocumentIndex& index, const RecallOptions& options,
                                   std::size_t threads = 1);

/// Maps values to [0, 1] by (v - min) / (max - min). When every value is
/// equal the result is 1 for a positive value and 0 otherwise.
std::vector<double> min_max_normalize(std::span<const double> values);

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace citerec
