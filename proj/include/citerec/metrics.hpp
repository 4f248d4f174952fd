#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/intent.hpp"
#include "citerec/rerank.hpp"
#include "citerec/retrieval.hpp"

namespace citerec {

/// A ranked list paired with the gold paper it is judged against.
struct JudgedList {
  const RankedList* list = nullptr;
  PaperId gold;
};

/// Mean of 1/rank(gold). A gold missing from its list counts as 0.
/// Throws std::invalid_argument on an empty query set.
double mrr(std::span<const JudgedList> queries);

/// Fraction of queries with the gold in the top k. Throws
/// std::invalid_argument for k == 0 or an empty query set.
double recall_at_k(std::span<const JudgedList> queries, std::size_t k);

struct QueryRank {
  std::string query_id;
  std::optional<std::size_t> rank;

  friend bool operator==(const QueryRank&, const QueryRank&) = default;
};

struct EvalResult {
  double mrr = 0.0;
  std::map<std::size_t, double> recall_at;
  std::size_t query_count = 0;
  std::vector<QueryRank> ranks;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

EvalResult evaluate_ranks(std::vector<QueryRank> ranks, std::span<const std::size_t> ks);

struct PipelineOptions {
  RecallOptions recall;
  std::vector<std::size_t> ks{10, 100, 200, 500, 1000, 2000};
  std::size_t rerank_depth = 100;
  std::size_t threads = 1;
};

struct PipelineEval {
  /// Metrics on the raw recall lists.
  EvalResult recall;
  /// Metrics after reranking the head of each recall list; absent without a scorer.
  std::optional<EvalResult> rerank;
  std::size_t scorer_failures = 0;
};

/// Query side for the reranker. Queries without an intent label use
/// `intent_model` when given and Background otherwise.
RerankQuery rerank_query_for(const CitationQuery& query, const Corpus& corpus,
                             const IntentModel* intent_model = nullptr);

/// The reranked head followed by the rest of the recall list in recall order.
RankedList rerank_full(const RankedList& recall, const RerankQuery& query, const Corpus& corpus,
                       CandidateScorer& scorer, std::size_t depth, std::size_t* failures = nullptr);

PipelineEval evaluate_pipeline(std::span<const CitationQuery> queries, const DocumentIndex& index,
                               const PipelineOptions& options, CandidateScorer* scorer = nullptr,
                               const IntentModel* intent_model = nullptr);

struct BootstrapResult {
  double observed = 0.0;  // mean(b) - mean(a)
  double lower = 0.0;     // 2.5th percentile of resampled differences
  double upper = 0.0;     // 97.5th percentile
  /// Share of resamples where b does not beat a.
  double p_value = 0.0;
};

/// Paired bootstrap over per-query scores of two systems.
BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b,
                                 std::size_t resamples = 1000, std::uint64_t seed = 1);

std::vector<double> reciprocal_ranks(const EvalResult& result);

std::string eval_table_text(const PipelineEval& eval);
std::string eval_records(const PipelineEval& eval);

}  // namespace citerec
