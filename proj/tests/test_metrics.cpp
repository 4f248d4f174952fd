#include <gtest/gtest.h>

#include <map>

#include "citerec/metrics.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

RankedList list_of(std::vector<std::string> ids) {
  std::vector<RankedEntry> entries;
  double s = 1.0;
  for (auto& id : ids) {
    entries.push_back({std::move(id), s});
    s -= 1e-3;
  }
  return RankedList::from_ordered(std::move(entries));
}

TEST(Mrr, HandExample) {
  const auto a = list_of({"x", "g", "y"});
  const auto b = list_of({"p", "q", "r", "s", "h"});
  const std::vector<JudgedList> q = {{&a, "g"}, {&b, "h"}};
  EXPECT_DOUBLE_EQ(mrr(q), 0.35);
}

TEST(Mrr, MissingGoldContributesZero) {
  const auto a = list_of({"g"});
  const auto b = list_of({"x"});
  const std::vector<JudgedList> q = {{&a, "g"}, {&b, "g"}};
  EXPECT_DOUBLE_EQ(mrr(q), 0.5);
}

TEST(Mrr, EmptyQuerySetIsAnError) {
  EXPECT_THROW(mrr({}), std::invalid_argument);
  EXPECT_THROW(recall_at_k({}, 10), std::invalid_argument);
}

TEST(RecallAtK, ZeroKIsAnError) {
  const auto a = list_of({"g"});
  const std::vector<JudgedList> q = {{&a, "g"}};
  EXPECT_THROW(recall_at_k(q, 0), std::invalid_argument);
  EXPECT_DOUBLE_EQ(recall_at_k(q, 10), 1.0);
}

TEST(RecallAtK, CountsHitsInsideTheCutoff) {
  std::vector<RankedList> lists;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::string> ids;
    for (int j = 0; j < 20; ++j) ids.push_back("d" + std::to_string(j));
    ids[i < 7 ? 3 : 15] = "gold";
    lists.push_back(list_of(ids));
  }
  std::vector<JudgedList> q;
  for (const auto& l : lists) q.push_back({&l, "gold"});
  EXPECT_DOUBLE_EQ(recall_at_k(q, 10), 0.7);
}

TEST(MetricsProperty, MatchBruteForceOnRandomInstances) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    Rng rng(seed);
    const auto nq = 1 + rng.below(15);
    std::vector<RankedList> lists;
    std::vector<std::vector<std::string>> raw;
    std::vector<std::string> golds;
    for (std::size_t i = 0; i < nq; ++i) {
      const auto len = rng.below(30);
      std::vector<std::string> ids;
      for (std::size_t j = 0; j < len; ++j) ids.push_back("c" + std::to_string(j));
      rng.shuffle(std::span(ids));
      raw.push_back(ids);
      lists.push_back(list_of(ids));
      golds.push_back("c" + std::to_string(rng.below(40)));
    }
    std::vector<JudgedList> q;
    for (std::size_t i = 0; i < nq; ++i) q.push_back({&lists[i], golds[i]});

    double rr = 0.0;
    for (std::size_t i = 0; i < nq; ++i) rr += testing::reciprocal_rank_oracle(raw[i], golds[i]);
    EXPECT_EQ(mrr(q), rr / static_cast<double>(nq)) << seed;

    const std::size_t k = 1 + rng.below(30);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t j = 0; j < std::min(k, raw[i].size()); ++j) hits += raw[i][j] == golds[i];
    }
    EXPECT_EQ(recall_at_k(q, k), static_cast<double>(hits) / static_cast<double>(nq)) << seed;
  }
}

TEST(EvalResultProperty, RecallIsMonotoneInK) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<QueryRank> ranks;
    for (int i = 0; i < 20; ++i) {
      std::optional<std::size_t> r;
      if (rng.bernoulli(0.8)) r = 1 + rng.below(50);
      ranks.push_back({"q" + std::to_string(i), r});
    }
    const std::vector<std::size_t> ks = {1, 5, 10, 20, 50};
    const auto e = evaluate_ranks(ranks, ks);
    double prev = 0.0;
    for (auto k : ks) {
      EXPECT_GE(e.recall_at.at(k), prev);
      prev = e.recall_at.at(k);
    }
    EXPECT_GE(e.mrr, 0.0);
    EXPECT_LE(e.mrr, 1.0);
  }
}

/// Knows every query's gold and gives it the only positive score.
class OracleScorer final : public CandidateScorer {
 public:
  explicit OracleScorer(std::map<std::string, std::string> gold_title_by_context)
      : gold_(std::move(gold_title_by_context)) {}
  std::optional<double> score(const RerankInput& input) override {
    return gold_.at(input.context) == input.candidate_title ? 1.0 : 0.0;
  }

 private:
  std::map<std::string, std::string> gold_;
};

TEST(Pipeline, OracleRerankerReachesPerfectMrr) {
  const auto index = testing::small_index();
  std::map<std::string, std::string> gold;
  std::vector<CitationQuery> queries;
  for (const auto& q : testing::small_queries()) {
    if (gold.emplace(q.context, index.corpus.find(q.gold_id)->title).second) queries.push_back(q);
  }
  OracleScorer scorer(gold);
  PipelineOptions options;
  options.ks = {1, 10};
  options.rerank_depth = index.ids.size();
  const auto e = evaluate_pipeline(queries, index, options, &scorer);
  ASSERT_TRUE(e.rerank.has_value());
  EXPECT_DOUBLE_EQ(e.rerank->mrr, 1.0);
  EXPECT_DOUBLE_EQ(e.rerank->recall_at.at(1), 1.0);
  EXPECT_LE(e.recall.mrr, 1.0);
  EXPECT_EQ(e.scorer_failures, 0u);
}

TEST(Pipeline, RepeatedRunsAreIdentical) {
  const auto index = testing::small_index();
  PipelineOptions options;
  options.threads = 3;
  const auto a = evaluate_pipeline(testing::small_queries(), index, options);
  options.threads = 1;
  const auto b = evaluate_pipeline(testing::small_queries(), index, options);
  EXPECT_EQ(a.recall, b.recall);
  EXPECT_FALSE(a.rerank.has_value());
  EXPECT_EQ(eval_records(a), eval_records(b));
}

TEST(RerankFull, TailFollowsTheHead) {
  const auto corpus = testing::corpus_of({testing::paper("A", "a", "x"), testing::paper("B", "b", "x y"),
                                          testing::paper("C", "c", "z")});
  const auto recalled = RankedList::from_scores({{"A", 0.9}, {"B", 0.5}, {"C", 0.1}});
  OracleScorer scorer(std::map<std::string, std::string>{{"ctx", "b"}});
  const auto out = rerank_full(recalled, {"", "ctx", IntentLabel::kMethod}, corpus, scorer, 2);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].id, "B");
  EXPECT_EQ(out[1].id, "A");
  EXPECT_EQ(out[2].id, "C");
}

TEST(Bootstrap, IdenticalSystemsShowNoGain) {
  const std::vector<double> a = {0.1, 0.5, 1.0, 0.2};
  const auto r = paired_bootstrap(a, a, 200, 3);
  EXPECT_DOUBLE_EQ(r.observed, 0.0);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0);
}

TEST(Bootstrap, UniformGainIsSignificant) {
  const std::vector<double> a = {0.1, 0.5, 0.3, 0.2, 0.4};
  std::vector<double> b = a;
  for (auto& v : b) v += 0.1;
  const auto r = paired_bootstrap(a, b, 500, 3);
  EXPECT_NEAR(r.observed, 0.1, 1e-12);
  EXPECT_DOUBLE_EQ(r.p_value, 0.0);
  EXPECT_LE(r.lower, r.upper);
}

}  // namespace
}  // namespace citerec
