#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "citerec/corpus.hpp"
#include "citerec/text.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(Text, TokensAreLowercasedAlphanumericRuns) {
  EXPECT_EQ(word_tokens("Graph Neural-Networks, 2nd ed."),
            (std::vector<std::string>{"graph", "neural", "networks", "2nd", "ed"}));
  EXPECT_TRUE(word_tokens("  ...  ").empty());
}

TEST(Text, OverlapF1) {
  EXPECT_DOUBLE_EQ(overlap_f1(token_set("a b c"), token_set("c b a")), 1.0);
  EXPECT_DOUBLE_EQ(overlap_f1(token_set("a b"), token_set("c d")), 0.0);
  EXPECT_DOUBLE_EQ(overlap_f1(token_set("a b"), token_set("b c d")), 2.0 * 1 / 5);
  EXPECT_DOUBLE_EQ(overlap_f1({}, {}), 0.0);
}

TEST(Text, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Corpus, ParsesThreeLines) {
  std::istringstream in(
      R"({"id":"A","title":"t","abstract":"x","references":["B"]})"
      "\n"
      R"({"id":"B","title":"u","abstract":"y","references":[],"year":2001})"
      "\n"
      R"({"id":"C","title":"v","abstract":"z","references":["A","B"]})"
      "\n");
  const auto c = parse_papers(in);
  ASSERT_EQ(c.papers.size(), 3u);
  EXPECT_EQ(c.papers.at("C").references, (IdSet{"A", "B"}));
  EXPECT_EQ(c.papers.at("B").year, 2001);
  EXPECT_FALSE(c.papers.at("A").year.has_value());
}

TEST(Corpus, DuplicateIdNamesTheId) {
  std::istringstream in(
      "{\"id\":\"P1\"}\n{\"id\":\"P2\"}\n{\"id\":\"P3\"}\n{\"id\":\"P1\"}\n");
  try {
    parse_papers(in);
    FAIL() << "expected DuplicateIdError";
  } catch (const DuplicateIdError& e) {
    EXPECT_EQ(e.id(), "P1");
    EXPECT_NE(std::string(e.what()).find("P1"), std::string::npos);
  }
}

TEST(Corpus, EmptyFileWarns) {
  TempDir dir;
  write_file(dir / "papers.jsonl", "");
  std::vector<std::string> warnings;
  const auto c = load_papers(dir / "papers.jsonl", [&](std::string_view w) { warnings.emplace_back(w); });
  EXPECT_TRUE(c.papers.empty());
  EXPECT_FALSE(warnings.empty());
}

TEST(Corpus, ParseErrorCarriesLineNumber) {
  std::istringstream in("{\"id\":\"A\"}\n\nnot json\n");
  try {
    parse_papers(in);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Corpus, SelfReferenceDroppedWithWarning) {
  std::istringstream in(R"({"id":"A","references":["A","B"]})"
                        "\n");
  std::size_t warnings = 0;
  const auto c = parse_papers(in, [&](std::string_view) { ++warnings; });
  EXPECT_EQ(c.papers.at("A").references, (IdSet{"B"}));
  EXPECT_EQ(warnings, 1u);
}

TEST(Corpus, LineOrderDoesNotMatter) {
  const std::vector<std::string> lines = {
      R"({"id":"A","title":"a","references":["B","C"]})", R"({"id":"B","title":"b","references":["C"]})",
      R"({"id":"C","title":"c","references":[]})", R"({"id":"D","title":"d","references":["A"]})"};
  auto order = lines;
  Rng rng(5);
  std::istringstream first([&] {
    std::string s;
    for (const auto& l : lines) s += l + "\n";
    return s;
  }());
  const auto reference = parse_papers(first).papers;
  for (int trial = 0; trial < 10; ++trial) {
    rng.shuffle(std::span(order));
    std::string s;
    for (const auto& l : order) s += l + "\n";
    std::istringstream in(s);
    EXPECT_EQ(parse_papers(in).papers, reference);
  }
}

TEST(Corpus, ContextSplitJoinedWithSlotMarker) {
  std::istringstream in(
      R"({"query_id":"q1","citing_id":"A","cited_id":"B","text_before":"as in","text_after":"we do","intent":"method"})"
      "\n");
  const auto ctx = parse_contexts(in);
  ASSERT_EQ(ctx.size(), 1u);
  EXPECT_EQ(ctx[0].context, "as in [CITE] we do");
  EXPECT_EQ(ctx[0].intent, IntentLabel::kMethod);
}

TEST(Corpus, UnknownIntentIsParseError) {
  std::istringstream in(R"({"query_id":"q1","citing_id":"A","cited_id":"B","context":"x","intent":"praise"})"
                        "\n");
  EXPECT_THROW(parse_contexts(in), ParseError);
}

Corpus three_papers() {
  return testing::corpus_of({testing::paper("P1", "", "", {"A", "B", "C"}), testing::paper("P2", "", "", {"B"}),
                             testing::paper("A", "", ""), testing::paper("B", "", ""), testing::paper("C", "", "")});
}

TEST(Corpus, LeaveOneOutProfile) {
  const auto corpus = three_papers();
  const std::vector<ContextRecord> ctx = {{"q1", "P1", "ctx", "B", std::nullopt},
                                          {"q2", "P2", "ctx", "B", std::nullopt},
                                          {"q3", "P1", "ctx", "Z", std::nullopt}};
  const auto built = build_queries(corpus, ctx);
  ASSERT_EQ(built.queries.size(), 2u);
  EXPECT_EQ(built.queries[0].profile, (IdSet{"A", "C"}));
  EXPECT_TRUE(built.queries[1].profile.empty());
  EXPECT_EQ(built.dropped, 1u);
}

TEST(Corpus, UnknownCitingPaperIsError) {
  const auto corpus = three_papers();
  const std::vector<ContextRecord> ctx = {{"q1", "NOPE", "ctx", "B", std::nullopt}};
  EXPECT_THROW(build_queries(corpus, ctx), CorpusError);
}

TEST(CorpusProperty, LeaveOneOutInvariantOnRandomCorpora) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    Corpus corpus;
    const auto n = 5 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      PaperRecord p;
      p.id = "N" + std::to_string(i);
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i && rng.bernoulli(0.3)) p.references.insert("N" + std::to_string(j));
      }
      corpus.papers.emplace(p.id, p);
    }
    std::vector<ContextRecord> ctx;
    for (const auto& [id, p] : corpus.papers) {
      for (const auto& r : p.references) ctx.push_back({id + r, id, "text", r, std::nullopt});
    }
    const auto built = build_queries(corpus, ctx);
    EXPECT_EQ(built.queries.size(), ctx.size());
    for (const auto& q : built.queries) {
      EXPECT_FALSE(q.profile.count(q.gold_id));
      EXPECT_FALSE(q.profile.count(q.citing_id));
      EXPECT_EQ(q.profile.size() + 1, corpus.papers.at(q.citing_id).references.size());
    }
  }
}

TEST(Corpus, ValidateFlagsDanglingReferences) {
  const auto corpus = testing::corpus_of({testing::paper("A", "", "", {"B", "X"}), testing::paper("B", "", "")});
  const auto report = validate(corpus);
  ASSERT_EQ(report.dangling.size(), 1u);
  EXPECT_EQ(report.dangling[0], (std::pair<PaperId, PaperId>{"A", "X"}));
}

TEST(Corpus, PapersRoundTripThroughJsonLines) {
  auto corpus = three_papers();
  corpus.papers.at("A").year = 1999;
  corpus.papers.at("A").title = "Quote \" and tab \t";
  std::stringstream buf;
  write_papers(buf, corpus);
  EXPECT_EQ(parse_papers(buf).papers, corpus.papers);
}

TEST(Corpus, SplitsPartitionQueries) {
  std::vector<CitationQuery> qs;
  for (int i = 0; i < 500; ++i) qs.push_back({"q" + std::to_string(i), "A", "c", {}, "B", std::nullopt});
  const auto train = select_split(qs, QuerySplit::kTrain);
  const auto test = select_split(qs, QuerySplit::kTest);
  EXPECT_EQ(train.size() + test.size(), qs.size());
  EXPECT_GT(test.size(), 50u);
  EXPECT_LT(test.size(), 150u);
  for (const auto& q : test) {
    EXPECT_TRUE(std::none_of(train.begin(), train.end(), [&](const auto& t) { return t.query_id == q.query_id; }));
  }
  EXPECT_EQ(select_split(qs, QuerySplit::kAll).size(), qs.size());
}

}  // namespace
}  // namespace citerec
