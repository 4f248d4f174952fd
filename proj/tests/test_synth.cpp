#include <gtest/gtest.h>

#include "citerec/graph.hpp"
#include "citerec/synth.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

SynthSpec spec_with(std::size_t papers, std::uint64_t seed = 42) {
  SynthSpec s;
  s.n_papers = papers;
  s.seed = seed;
  return s;
}

TEST(Synth, SameSeedSameCorpus) {
  const auto a = generate_synth(spec_with(60));
  const auto b = generate_synth(spec_with(60));
  EXPECT_EQ(a.papers, b.papers);
  EXPECT_EQ(a.contexts, b.contexts);
  EXPECT_EQ(a.intent_sentences, b.intent_sentences);
  EXPECT_NE(generate_synth(spec_with(60, 43)).papers, a.papers);
}

TEST(Synth, DegenerateSpecsAreRejected) {
  EXPECT_THROW(generate_synth(spec_with(0)), std::invalid_argument);
  auto s = spec_with(10);
  s.p_intra = 1.5;
  EXPECT_THROW(generate_synth(s), std::invalid_argument);
  s = spec_with(10);
  s.n_clusters = 0;
  EXPECT_THROW(generate_synth(s), std::invalid_argument);
}

TEST(Synth, NoCrossClusterEdgesWithoutInterProbability) {
  auto s = spec_with(90);
  s.p_inter = 0.0;
  const auto c = generate_synth(s);
  std::map<PaperId, std::size_t> cluster;
  for (std::size_t i = 0; i < c.papers.size(); ++i) cluster[c.papers[i].id] = c.cluster_of[i];
  for (std::size_t i = 0; i < c.papers.size(); ++i) {
    for (const auto& r : c.papers[i].references) EXPECT_EQ(cluster.at(r), c.cluster_of[i]);
  }
}

TEST(Synth, ClustersAreDenserInside) {
  const auto c = generate_synth(spec_with(200));
  std::map<PaperId, std::size_t> cluster;
  for (std::size_t i = 0; i < c.papers.size(); ++i) cluster[c.papers[i].id] = c.cluster_of[i];
  std::size_t inside = 0, across = 0;
  for (std::size_t i = 0; i < c.papers.size(); ++i) {
    for (const auto& r : c.papers[i].references) (cluster.at(r) == c.cluster_of[i] ? inside : across)++;
  }
  EXPECT_GT(inside, 4 * across);
}

TEST(Synth, ContextsResolveAndRespectLeaveOneOut) {
  const auto synth = generate_synth(spec_with(80));
  const auto corpus = to_corpus(synth);
  EXPECT_EQ(corpus.papers.size(), 80u);
  EXPECT_FALSE(corpus.queries.empty());
  for (const auto& q : corpus.queries) {
    EXPECT_TRUE(corpus.papers.contains(q.gold_id));
    EXPECT_TRUE(corpus.papers.at(q.citing_id).references.contains(q.gold_id));
    EXPECT_FALSE(q.profile.contains(q.gold_id));
    EXPECT_TRUE(q.intent.has_value());
    EXPECT_FALSE(q.context.empty());
  }
}

TEST(Synth, IntentCorpusCoversEveryClass) {
  const auto data = generate_intent_corpus(30, 5);
  std::array<int, 3> counts{};
  for (const auto& s : data) ++counts[index_of(s.label)];
  EXPECT_EQ(counts, (std::array<int, 3>{10, 10, 10}));
}

TEST(Synth, WrittenFilesLoadBack) {
  testing::TempDir dir;
  const auto synth = generate_synth(spec_with(40));
  const auto files = write_synth(synth, dir.path());
  const auto papers = load_papers(files.papers);
  EXPECT_EQ(papers.papers.size(), 40u);
  EXPECT_EQ(load_contexts(files.contexts), synth.contexts);
  EXPECT_EQ(load_labeled_sentences(files.intents), synth.intent_sentences);
}

}  // namespace
}  // namespace citerec
