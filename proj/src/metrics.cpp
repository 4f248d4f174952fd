#include "citerec/metrics.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "citerec/rng.hpp"
#include "json.hpp"

namespace citerec {

namespace {

void require_queries(std::span<const JudgedList> queries) {
  if (queries.empty()) throw std::invalid_argument("metric needs at least one query");
  for (const auto& q : queries) {
    if (q.list == nullptr) throw std::invalid_argument("judged list is null");
  }
}

}  // namespace

double mrr(std::span<const JudgedList> queries) {
  require_queries(queries);
  double total = 0.0;
  for (const auto& q : queries) {
    if (auto r = q.list->rank_of(q.gold)) total += 1.0 / static_cast<double>(*r);
  }
  return total / static_cast<double>(queries.size());
}

double recall_at_k(std::span<const JudgedList> queries, std::size_t k) {
  if (k == 0) throw std::invalid_argument("K must be at least 1");
  require_queries(queries);
  std::size_t hits = 0;
  for (const auto& q : queries) {
    if (auto r = q.list->rank_of(q.gold); r && *r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

EvalResult evaluate_ranks(std::vector<QueryRank> ranks, std::span<const std::size_t> ks) {
  if (ranks.empty()) throw std::invalid_argument("metric needs at least one query");
  EvalResult out;
  out.query_count = ranks.size();
  double total = 0.0;
  for (const auto& r : ranks) {
    if (r.rank) total += 1.0 / static_cast<double>(*r.rank);
  }
  out.mrr = total / static_cast<double>(ranks.size());
  for (auto k : ks) {
    if (k == 0) throw std::invalid_argument("K must be at least 1");
    std::size_t hits = 0;
    for (const auto& r : ranks) {
      if (r.rank && *r.rank <= k) ++hits;
    }
    out.recall_at[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  out.ranks = std::move(ranks);
  return out;
}

RerankQuery rerank_query_for(const CitationQuery& query, const Corpus& corpus,
                             const IntentModel* intent_model) {
  RerankQuery rq;
  if (const auto* citing = corpus.find(query.citing_id)) rq.citing_abstract = citing->abstract_text;
  rq.context = query.context;
  if (query.intent) {
    rq.intent = *query.intent;
  } else if (intent_model != nullptr) {
    rq.intent = predict_intent(query.context, *intent_model);
  }
  return rq;
}

RankedList rerank_full(const RankedList& recall, const RerankQuery& query, const Corpus& corpus,
                       CandidateScorer& scorer, std::size_t depth, std::size_t* failures) {
  auto outcome = rerank_list(recall, query, corpus, scorer, depth);
  if (failures != nullptr) *failures = outcome.scorer_failures;
  std::vector<RankedEntry> merged = outcome.ranking.entries();
  for (std::size_t i = std::min(depth, recall.size()); i < recall.size(); ++i) merged.push_back(recall[i]);
  return RankedList::from_ordered(std::move(merged));
}

PipelineEval evaluate_pipeline(std::span<const CitationQuery> queries, const DocumentIndex& index,
                               const PipelineOptions& options, CandidateScorer* scorer,
                               const IntentModel* intent_model) {
  const auto lists = recall_all(queries, index, options.recall, options.threads);
  PipelineEval out;
  std::vector<QueryRank> recall_ranks;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    recall_ranks.push_back({queries[i].query_id, lists[i].rank_of(queries[i].gold_id)});
  }
  out.recall = evaluate_ranks(std::move(recall_ranks), options.ks);
  if (scorer != nullptr) {
    std::vector<QueryRank> ranks;
    for (std::size_t i = 0; i < queries.size(); ++i) {
      std::size_t failures = 0;
      const auto reranked = rerank_full(lists[i], rerank_query_for(queries[i], index.corpus, intent_model),
                                        index.corpus, *scorer, options.rerank_depth, &failures);
      out.scorer_failures += failures;
      ranks.push_back({queries[i].query_id, reranked.rank_of(queries[i].gold_id)});
    }
    out.rerank = evaluate_ranks(std::move(ranks), options.ks);
  }
  return out;
}

BootstrapResult paired_bootstrap(std::span<const double> a, std::span<const double> b,
                                 std::size_t resamples, std::uint64_t seed) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("paired samples must be equal and non-empty");
  if (resamples == 0) throw std::invalid_argument("resamples must be positive");
  const auto n = a.size();
  std::vector<double> diff(n);
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = b[i] - a[i];
    observed += diff[i];
  }
  BootstrapResult out;
  out.observed = observed / static_cast<double>(n);
  Rng rng(seed);
  std::vector<double> means(resamples);
  std::size_t not_better = 0;
  for (auto& m : means) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += diff[rng.below(n)];
    m = s / static_cast<double>(n);
    if (m <= 0.0) ++not_better;
  }
  std::sort(means.begin(), means.end());
  auto pct = [&means](double q) {
    const auto at = static_cast<std::size_t>(q * static_cast<double>(means.size() - 1));
    return means[at];
  };
  out.lower = pct(0.025);
  out.upper = pct(0.975);
  out.p_value = static_cast<double>(not_better) / static_cast<double>(resamples);
  return out;
}

std::vector<double> reciprocal_ranks(const EvalResult& result) {
  std::vector<double> out;
  out.reserve(result.ranks.size());
  for (const auto& r : result.ranks) out.push_back(r.rank ? 1.0 / static_cast<double>(*r.rank) : 0.0);
  return out;
}

namespace {

void table_row(std::ostringstream& out, const std::string& stage, const EvalResult& r) {
  out << stage;
  for (std::size_t pad = stage.size(); pad < 8; ++pad) out << ' ';
  out << "  " << r.mrr;
  for (const auto& [k, v] : r.recall_at) out << "  " << v;
  out << "  " << r.query_count << '\n';
}

nlohmann::json result_json(const EvalResult& r) {
  nlohmann::json j;
  j["mrr"] = r.mrr;
  j["queries"] = r.query_count;
  for (const auto& [k, v] : r.recall_at) j["recall_at"][std::to_string(k)] = v;
  return j;
}

}  // namespace

std::string eval_table_text(const PipelineEval& eval) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "stage     MRR   ";
  for (const auto& [k, v] : eval.recall.recall_at) out << "  R@" << k << std::string(k < 10 ? 3 : k < 100 ? 2 : k < 1000 ? 1 : 0, ' ');
  out << "  queries\n";
  table_row(out, "recall", eval.recall);
  if (eval.rerank) table_row(out, "rerank", *eval.rerank);
  if (eval.rerank) out << "scorer_failures " << eval.scorer_failures << '\n';
  return out.str();
}

std::string eval_records(const PipelineEval& eval) {
  std::string out;
  auto emit = [&out](const std::string& stage, const EvalResult& r) {
    auto j = result_json(r);
    j["record"] = "summary";
    j["stage"] = stage;
    out += j.dump() + '\n';
    for (const auto& q : r.ranks) {
      nlohmann::json row = {{"record", "query"}, {"stage", stage}, {"query_id", q.query_id}};
      row["rank"] = q.rank ? nlohmann::json(*q.rank) : nlohmann::json(nullptr);
      out += row.dump() + '\n';
    }
  };
  emit("recall", eval.recall);
  if (eval.rerank) emit("rerank", *eval.rerank);
  return out;
}

}  // namespace citerec
