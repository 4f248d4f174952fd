#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "citerec/citeval.hpp"
#include "citerec/rng.hpp"
#include "httplib.h"
#include "json.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

// Independent transcription of the weighted average over the published weights.
double composite_oracle(double p, double a, double c, double d) {
  const double w[4] = {0.35, 0.25, 0.25, 0.20};
  return (w[0] * p + w[1] * a + w[2] * c + w[3] * d) / (w[0] + w[1] + w[2] + w[3]);
}

TEST(Weights, PublishedValuesAndNormalizedTotal) {
  static_assert(kRubricWeights.purpose == 0.35 && kRubricWeights.density == 0.20);
  static_assert(kRubricWeights.accuracy == 0.25 && kRubricWeights.context_fit == 0.25);
  EXPECT_NEAR(kRubricWeights.normalized().total(), 1.0, 1e-15);
}

TEST(Composite, Examples) {
  EXPECT_DOUBLE_EQ(composite_score({100, 100, 100, 100}), 100.0);
  EXPECT_DOUBLE_EQ(composite_score({0, 0, 0, 0}), 0.0);
  EXPECT_NEAR(composite_score({80, 90, 70, 60}), composite_oracle(80, 90, 70, 60), 1e-9);
}

TEST(Composite, OutOfRangeScoreIsRejected) {
  EXPECT_THROW(composite_score({101, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(composite_score({0, -1, 0, 0}), std::invalid_argument);
  EXPECT_THROW(composite_score({0, 0, std::nan(""), 0}), std::invalid_argument);
}

TEST(CompositeProperty, MonotoneAndBounded) {
  Rng rng(10);
  for (int trial = 0; trial < 10000; ++trial) {
    CitevalScores s{rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0, 100)};
    const double c = composite_score(s);
    const double lo = std::min({s.purpose, s.accuracy, s.context_fit, s.density});
    const double hi = std::max({s.purpose, s.accuracy, s.context_fit, s.density});
    EXPECT_GE(c, lo - 1e-9);
    EXPECT_LE(c, hi + 1e-9);
    EXPECT_NEAR(c, composite_oracle(s.purpose, s.accuracy, s.context_fit, s.density), 1e-9);
    auto up = s;
    double* fields[4] = {&up.purpose, &up.accuracy, &up.context_fit, &up.density};
    double* f = fields[rng.below(4)];
    *f = std::min(100.0, *f + rng.uniform(0, 20));
    EXPECT_GE(composite_score(up), c);
  }
}

TEST(JudgePrompt, ContainsRubricAndMarksEmptySlots) {
  JudgeInputs in{"citing abstract", "context [CITE]", IntentLabel::kMethod, "cited abstract", ""};
  const auto p = build_judge_prompt(in);
  EXPECT_NE(p.find("Purpose-driven Articulation"), std::string::npos);
  EXPECT_NE(p.find("(empty)"), std::string::npos);
  EXPECT_NE(p.find("context_fit"), std::string::npos);
  EXPECT_EQ(p, build_judge_prompt(in));
}

TEST(JudgeParse, AcceptsObjectInsideProse) {
  const auto s = parse_judge_response(
      "Sure.\n```json\n{\"purpose\": 85, \"accuracy\": 90, \"context_fit\": 80, \"density\": 75}\n```");
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(*s, (CitevalScores{85, 90, 80, 75}));
}

TEST(JudgeParse, AcceptsUnquotedKeys) {
  const auto s = parse_judge_response("{purpose: 85, accuracy: 90, context_fit: 80, density: 75}");
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->density, 75);
}

TEST(JudgeParse, RejectsBadReplies) {
  EXPECT_FALSE(parse_judge_response("{\"purpose\": 120, \"accuracy\": 90, \"context_fit\": 80, \"density\": 75}"));
  EXPECT_FALSE(parse_judge_response("The citation reads well and fits."));
  EXPECT_FALSE(parse_judge_response("{\"purpose\": 85, \"accuracy\": 90}"));
  EXPECT_FALSE(parse_judge_response("{\"purpose\": 85.5, \"accuracy\": 90, \"context_fit\": 80, \"density\": 75}"));
}

TEST(StubJudge, Heuristics) {
  JudgeInputs in{"graph methods", "we adopt graph attention", IntentLabel::kMethod, "attention networks",
                 "we adopt graph attention"};
  const auto r = stub_judge(in);
  EXPECT_DOUBLE_EQ(r.scores.context_fit, 100.0);
  EXPECT_DOUBLE_EQ(r.scores.density, 100.0);
  EXPECT_EQ(r, stub_judge(in));
  in.citation = "";
  const auto empty = stub_judge(in);
  EXPECT_EQ(empty.scores, (CitevalScores{0, 0, 0, 0}));
  EXPECT_DOUBLE_EQ(empty.composite, 0.0);
}

TEST(StubJudge, ResponseParsesBack) {
  JudgeInputs in{"graph methods", "we adopt graph attention", IntentLabel::kMethod, "attention networks",
                 "graph attention as in prior graph work"};
  const auto parsed = parse_judge_response(stub_judge_response(in));
  ASSERT_TRUE(parsed.has_value());
  EXPECT_NEAR(parsed->accuracy, stub_judge(in).scores.accuracy, 0.5);
}

TEST(Pearson, Examples) {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> y = {3, 2, 1};
  EXPECT_NEAR(pearson_r(x, x), 1.0, 1e-12);
  EXPECT_NEAR(pearson_r(x, y), -1.0, 1e-12);
  const std::vector<double> flat = {2, 2, 2};
  EXPECT_THROW(pearson_r(x, flat), std::invalid_argument);
  const std::vector<double> short_series = {1, 2};
  EXPECT_THROW(pearson_r(x, short_series), std::invalid_argument);
}

std::vector<JudgeInputs> judge_batch(std::size_t n) {
  std::vector<JudgeInputs> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"abstract " + std::to_string(i), "context words", IntentLabel::kBackground, "cited text",
                   "citation words " + std::to_string(i)});
  }
  return out;
}

JudgeRunOptions fast_options() {
  JudgeRunOptions o;
  o.backoff = std::chrono::milliseconds(1);
  return o;
}

TEST(JudgeRun, StubRunSucceedsInOrder) {
  const auto inputs = judge_batch(7);
  const auto run = run_judge(inputs, stub_judge_fn(), fast_options());
  ASSERT_EQ(run.exchanges.size(), 7u);
  EXPECT_EQ(run.succeeded, 7u);
  EXPECT_EQ(run.failed, 0u);
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_EQ(run.exchanges[i].prompt, build_judge_prompt(inputs[i]));
  ASSERT_TRUE(run.mean.has_value());
}

TEST(JudgeRun, RetriesUnparseableRepliesThenGivesUp) {
  const auto inputs = judge_batch(4);
  std::atomic<int> calls{0};
  // Request 0 recovers on its second attempt; request 1 never does.
  JudgeFn judge = [&](const JudgeInputs& in, const std::string&) -> std::string {
    ++calls;
    thread_local std::map<std::string, int> seen;
    const int attempt = ++seen[in.citing_abstract];
    if (in.citing_abstract == "abstract 0" && attempt == 1) throw std::runtime_error("transient");
    if (in.citing_abstract == "abstract 1") return "no scores here";
    return stub_judge_response(in);
  };
  auto options = fast_options();
  options.max_in_flight = 1;
  const auto run = run_judge(inputs, judge, options);
  EXPECT_EQ(run.succeeded + run.failed, inputs.size());
  EXPECT_EQ(run.failed, 1u);
  EXPECT_EQ(run.exchanges[0].attempts, 2);
  EXPECT_EQ(run.exchanges[1].attempts, 3);
  EXPECT_FALSE(run.exchanges[1].report.has_value());
  EXPECT_FALSE(run.exchanges[1].error.empty());
  EXPECT_EQ(calls.load(), 2 + 3 + 1 + 1);
}

TEST(JudgeRun, InFlightCapIsRespected) {
  const auto inputs = judge_batch(12);
  std::atomic<int> active{0}, peak{0};
  JudgeFn judge = [&](const JudgeInputs& in, const std::string&) {
    const int now = ++active;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --active;
    return stub_judge_response(in);
  };
  auto options = fast_options();
  options.max_in_flight = 3;
  const auto run = run_judge(inputs, judge, options);
  EXPECT_EQ(run.succeeded, 12u);
  EXPECT_LE(peak.load(), 3);
}

TEST(JudgeRun, AuditLogHasOneRecordPerRequest) {
  testing::TempDir dir;
  auto options = fast_options();
  options.audit_log = dir / "audit.jsonl";
  run_judge(judge_batch(5), stub_judge_fn(), options);
  std::istringstream in(testing::read_file(dir / "audit.jsonl"));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("request").get<std::size_t>(), n);
    EXPECT_TRUE(j.at("ok").get<bool>());
    ++n;
  }
  EXPECT_EQ(n, 5u);
}

TEST(RemoteJudge, TalksToChatCompletionsEndpoint) {
  httplib::Server server;
  std::atomic<int> hits{0};
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    EXPECT_EQ(body.at("model"), "judge-model");
    const nlohmann::json reply = {
        {"choices", {{{"message", {{"role", "assistant"},
                                   {"content", "{\"purpose\": 70, \"accuracy\": 60, \"context_fit\": 50, "
                                               "\"density\": 40}"}}}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ChatConfig config;
  config.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  config.model = "judge-model";
  config.api_key = "secret";
  config.timeout = std::chrono::milliseconds(5000);
  const auto run = run_judge(judge_batch(2), completion_judge_fn(remote_completion(config)), fast_options());
  server.stop();
  t.join();

  EXPECT_EQ(run.succeeded, 2u);
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(seen_auth, "Bearer secret");
  EXPECT_EQ(run.exchanges[0].report->scores, (CitevalScores{70, 60, 50, 40}));
}

TEST(RemoteJudge, UnreachableEndpointFailsEveryRequest) {
  ChatConfig config;
  config.url = "http://127.0.0.1:1/v1/chat/completions";
  config.model = "m";
  config.timeout = std::chrono::milliseconds(300);
  const auto run = run_judge(judge_batch(2), completion_judge_fn(remote_completion(config)), fast_options());
  EXPECT_EQ(run.failed, 2u);
  EXPECT_FALSE(run.mean.has_value());
  EXPECT_THROW(chat_complete(config, "hi"), TransportError);
}

TEST(ChatConfig, MissingEnvironmentIsATransportError) {
  unsetenv("CITEREC_LLM_URL");
  EXPECT_THROW(ChatConfig::from_env(kJudgeModelVariable), TransportError);
}

}  // namespace
}  // namespace citerec
