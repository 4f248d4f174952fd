#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>
#include <cmath>

#include "citerec/genprep.hpp"
#include "citerec/rng.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

using HighPrecision = boost::multiprecision::cpp_dec_float_50;

double softplus_neg_oracle(double margin) {
  const HighPrecision m(margin);
  return static_cast<double>(boost::multiprecision::log(1 + boost::multiprecision::exp(-m)));
}

double dpo(std::initializer_list<double> margins) {
  const std::vector<double> v(margins);
  return dpo_loss(v);
}

TEST(DpoLoss, Examples) {
  EXPECT_NEAR(dpo({0.0}), std::log(2.0), 1e-9);
  EXPECT_NEAR(dpo({2.0}), 0.126928, 1e-6);
  EXPECT_NEAR(dpo({0.0, 0.0}), 0.693147, 1e-6);
}

TEST(DpoLoss, InvalidInputIsRejected) {
  EXPECT_THROW(dpo_loss({}), std::invalid_argument);
  EXPECT_THROW(dpo({1.0, std::nan("")}), std::invalid_argument);
  EXPECT_THROW(dpo({INFINITY}), std::invalid_argument);
}

TEST(DpoLossProperty, MatchesHighPrecisionReference) {
  Rng rng(99);
  std::vector<double> margins;
  HighPrecision total = 0;
  for (int i = 0; i < 1000; ++i) {
    const double m = rng.uniform(-10.0, 10.0);
    margins.push_back(m);
    total += boost::multiprecision::log(1 + boost::multiprecision::exp(-HighPrecision(m)));
    EXPECT_NEAR(dpo({m}), softplus_neg_oracle(m), 1e-9) << m;
  }
  EXPECT_NEAR(dpo_loss(margins), static_cast<double>(total / 1000), 1e-9);
}

TEST(DpoLossProperty, StrictlyDecreasingAndPositive) {
  double prev = dpo({-10.0});
  for (int i = 1; i <= 2000; ++i) {
    const double m = -10.0 + i * 0.01;
    const double cur = dpo({m});
    EXPECT_LT(cur, prev) << m;
    EXPECT_GT(cur, 0.0);
    prev = cur;
  }
  EXPECT_GT(dpo({700.0}), 0.0);
}

GenerationRequest request(IntentLabel intent = IntentLabel::kComparative) {
  GenerationRequest r;
  r.request_id = "q1";
  r.citing_abstract = "We study graph neural recommenders.";
  r.context = "Our model [CITE] on the benchmark.";
  r.intent = intent;
  r.cited_abstract = "A strong baseline for citation ranking. It uses many features.";
  r.cited_title = "Baseline Ranking";
  return r;
}

TEST(GenerationPrompt, DeterministicAndIntentSpecific) {
  const auto p = build_generation_prompt(request());
  EXPECT_EQ(p, build_generation_prompt(request()));
  EXPECT_NE(p.find("Purpose: comparative"), std::string::npos);
  EXPECT_NE(p.find("Citation intent: comparative"), std::string::npos);
  EXPECT_EQ(p.find("Reasoning:"), std::string::npos);
  EXPECT_NE(p, build_generation_prompt(request(IntentLabel::kMethod)));
}

TEST(GenerationPrompt, ReasoningScaffoldOnlyWhenRequested) {
  auto r = request();
  r.request_reasoning = true;
  EXPECT_NE(build_generation_prompt(r).find("Reasoning:"), std::string::npos);
}

TEST(CotPrompt, NamesFieldsAndMarksEmptySlots) {
  const auto p = build_cot_extraction_prompt("citing text", "");
  EXPECT_NE(p.find("themes"), std::string::npos);
  EXPECT_NE(p.find("keywords"), std::string::npos);
  EXPECT_NE(p.find("(empty)"), std::string::npos);
  EXPECT_EQ(p, build_cot_extraction_prompt("citing text", ""));
}

TEST(CotParse, ToleratesSurroundingText) {
  const auto r = parse_cot_extraction(
      "Here you go: {\"themes\": [\"ranking\"], \"keywords\": [\"graph\", \"cf\"], \"reasoning\": \"both rank\"} ok");
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->themes, std::vector<std::string>{"ranking"});
  EXPECT_EQ(r->keywords.size(), 2u);
  EXPECT_EQ(r->reasoning, "both rank");
  EXPECT_FALSE(parse_cot_extraction("nothing structured").has_value());
}

TEST(SftRecord, CarriesReasoningAndTarget) {
  CotRecord cot{{"ranking"}, {"graph"}, "", "As shown in prior work, ranking helps."};
  const auto sft = make_sft_record(request(), cot);
  EXPECT_EQ(sft.target, cot.citation);
  EXPECT_NE(sft.reasoning.find("ranking"), std::string::npos);
  EXPECT_NE(sft.prompt.find("Reasoning:"), std::string::npos);
}

TEST(Export, PreferencePairsRoundTrip) {
  testing::TempDir dir;
  std::vector<PreferencePair> pairs;
  for (int i = 0; i < 5; ++i) {
    pairs.push_back({"prompt " + std::to_string(i), "good \"quoted\" " + std::to_string(i), "bad\n" + std::to_string(i)});
  }
  const auto report = export_preference_pairs(pairs, dir / "dpo.jsonl");
  EXPECT_EQ(report.written, 5u);
  EXPECT_TRUE(report.rejected.empty());
  EXPECT_EQ(load_preference_pairs(dir / "dpo.jsonl"), pairs);
  const auto text = testing::read_file(dir / "dpo.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Export, IdenticalWinnerAndLoserIsRejected) {
  testing::TempDir dir;
  const std::vector<PreferencePair> pairs = {{"p", "same", "same"}, {"p", "a", "b"}, {"p", "", "b"}};
  const auto report = export_preference_pairs(pairs, dir / "dpo.jsonl");
  EXPECT_EQ(report.written, 1u);
  ASSERT_EQ(report.rejected.size(), 2u);
  EXPECT_EQ(report.rejected[0].index, 0u);
  EXPECT_FALSE(report.rejected[0].reason.empty());
  EXPECT_EQ(report.rejected[1].index, 2u);
}

TEST(Export, EmptyInputWritesEmptyFileAndWarns) {
  testing::TempDir dir;
  int warnings = 0;
  const auto report = export_sft_records({}, dir / "sft.jsonl", [&](std::string_view) { ++warnings; });
  EXPECT_EQ(report.written, 0u);
  EXPECT_EQ(warnings, 1);
  EXPECT_TRUE(std::filesystem::exists(dir / "sft.jsonl"));
  EXPECT_EQ(std::filesystem::file_size(dir / "sft.jsonl"), 0u);
}

TEST(Export, SftRecordsRoundTrip) {
  testing::TempDir dir;
  const std::vector<SftRecord> records = {{"p1", "r1", "t1"}, {"p2", "", "t2"}};
  EXPECT_EQ(export_sft_records(records, dir / "sft.jsonl").written, 2u);
  EXPECT_EQ(load_sft_records(dir / "sft.jsonl"), records);
}

TEST(Generation, StubIsDeterministicTemplate) {
  const auto s = stub_generate(request());
  EXPECT_EQ(s, generate_citation(request()));
  EXPECT_EQ(s.rfind("As shown in [Baseline Ranking], ", 0), 0u) << s;
  EXPECT_NE(s.find("a strong baseline for citation ranking."), std::string::npos) << s;
  EXPECT_EQ(s.find("It uses many features"), std::string::npos) << s;
}

TEST(Generation, InvalidRequestIsAGenerationError) {
  auto r = request();
  r.context.clear();
  EXPECT_FALSE(validate(r).empty());
  EXPECT_THROW(generate_citation(r), GenerationError);
}

TEST(Generation, BackendFailureNamesTheRequest) {
  ChatConfig config;
  config.url = "http://127.0.0.1:1/v1/chat/completions";
  config.model = "m";
  config.timeout = std::chrono::milliseconds(300);
  try {
    generate_citation(request(), remote_completion(config));
    FAIL() << "expected GenerationError";
  } catch (const GenerationError& e) {
    EXPECT_EQ(e.request_id(), "q1");
  }
}

TEST(Generation, ExtractsFinalCitationLine) {
  EXPECT_EQ(extract_citation("Themes: a\nCitation: As in X, we rank."), "As in X, we rank.");
  EXPECT_EQ(extract_citation("  plain sentence.  \n"), "plain sentence.");
}

}  // namespace
}  // namespace citerec
