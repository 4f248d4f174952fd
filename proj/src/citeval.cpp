#include "citerec/citeval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "citerec/text.hpp"
#include "json.hpp"

namespace citerec {

static_assert(kRubricWeights.purpose == 0.35 && kRubricWeights.accuracy == 0.25 &&
              kRubricWeights.context_fit == 0.25 && kRubricWeights.density == 0.20);
static_assert(std::abs(kRubricWeights.normalized().total() - 1.0) < 1e-15);

namespace {

void check_score(double v, const char* name) {
  if (!(v >= 0.0 && v <= 100.0)) {
    throw std::invalid_argument(std::string(name) + " score must be in [0, 100]");
  }
}

constexpr std::array<const char*, 4> kDimensionKeys{"purpose", "accuracy", "context_fit", "density"};

}  // namespace

double composite_score(const CitevalScores& s, const DimensionWeights& w) {
  check_score(s.purpose, "purpose");
  check_score(s.accuracy, "accuracy");
  check_score(s.context_fit, "context_fit");
  check_score(s.density, "density");
  if (w.purpose < 0 || w.accuracy < 0 || w.context_fit < 0 || w.density < 0 || !(w.total() > 0)) {
    throw std::invalid_argument("rubric weights must be non-negative with a positive total");
  }
  const double sum = w.purpose * s.purpose + w.accuracy * s.accuracy + w.context_fit * s.context_fit +
                     w.density * s.density;
  return std::clamp(sum / w.total(), 0.0, 100.0);
}

CitevalReport make_report(const CitevalScores& scores, const DimensionWeights& weights) {
  CitevalReport r;
  r.scores = scores;
  r.composite = composite_score(scores, weights);
  return r;
}

std::string build_judge_prompt(const JudgeInputs& in) {
  auto slot = [](const std::string& v) { return v.empty() ? std::string("(empty)") : v; };
  std::ostringstream p;
  p << "You are evaluating a generated citation sentence. Score it on four dimensions, each an "
       "integer from 0 to 100, using the bands below.\n\n"
       "Purpose-driven Articulation (weight 0.35)\n"
       "  90-100: Directly supports core arguments, forming indispensable logical closure.\n"
       "  80-89: Effectively addresses main research questions, enhancing credibility.\n"
       "  70-79: Provides relevant background without direct support.\n"
       "  60-69: Partial relevance with limited argumentative value.\n"
       "  0-59: Severe deviation or misleading content.\n\n"
       "Semantic Accuracy (weight 0.25)\n"
       "  90-100: Fully preserves key elements with 100% term accuracy.\n"
       "  80-89: No core content distortion, reasonable simplification of minor parameters.\n"
       "  70-79: Non-critical phrasing differences.\n"
       "  60-69: Important concept/data inaccuracies.\n"
       "  0-59: Substantive errors or fabricated content.\n\n"
       "Contextual Fit (weight 0.25)\n"
       "  90-100: Seamlessly embedded, significantly enhances reading efficiency.\n"
       "  80-89: Smooth transitions without comprehension barriers.\n"
       "  70-79: Requires moderate cognitive adjustment.\n"
       "  60-69: Causes localized logical disruptions.\n"
       "  0-59: Severely compromises textual coherence.\n\n"
       "Information Density (weight 0.20)\n"
       "  90-100: Pareto-optimal compression (balance of completeness and conciseness).\n"
       "  80-89: Lossless compression of core information.\n"
       "  70-79: Non-essential redundancy present.\n"
       "  60-69: Critical omissions or oversimplification.\n"
       "  0-59: Severe information density imbalance.\n\n"
       "Citing paper abstract:\n"
    << slot(in.citing_abstract) << "\n\nCitation context:\n"
    << slot(in.context) << "\n\nCitation intent: " << to_string(in.intent) << "\n\nCited paper abstract:\n"
    << slot(in.cited_abstract) << "\n\nGenerated citation:\n"
    << slot(in.citation)
    << "\n\nReply with a single JSON object and nothing else:\n"
       "{\"purpose\": <int>, \"accuracy\": <int>, \"context_fit\": <int>, \"density\": <int>, "
       "\"rationale\": {\"purpose\": <text>, \"accuracy\": <text>, \"context_fit\": <text>, \"density\": <text>}}\n";
  return p.str();
}

namespace {

std::optional<CitevalScores> scores_from_json(const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  std::array<double, 4> v{};
  for (std::size_t i = 0; i < kDimensionKeys.size(); ++i) {
    auto it = j.find(kDimensionKeys[i]);
    if (it == j.end() || !it->is_number_integer()) return std::nullopt;
    const auto x = it->get<long long>();
    if (x < 0 || x > 100) return std::nullopt;
    v[i] = static_cast<double>(x);
  }
  return CitevalScores{v[0], v[1], v[2], v[3]};
}

/// End of the balanced object starting at `open`, honouring strings.
std::optional<std::size_t> object_end(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<CitevalScores> parse_judge_response(std::string_view raw) {
  static const std::regex bare_key(R"(([\{,]\s*)([A-Za-z_][A-Za-z0-9_]*)\s*:)");
  for (std::size_t open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    const auto close = object_end(raw, open);
    if (!close) continue;
    const std::string candidate(raw.substr(open, *close - open + 1));
    auto j = nlohmann::json::parse(candidate, nullptr, false);
    if (j.is_discarded()) j = nlohmann::json::parse(std::regex_replace(candidate, bare_key, "$1\"$2\":"), nullptr, false);
    if (j.is_discarded()) continue;
    if (auto s = scores_from_json(j)) return s;
  }
  return std::nullopt;
}

namespace {

std::array<std::string, 4> rationale_from_json(std::string_view raw) {
  std::array<std::string, 4> out;
  const auto open = raw.find('{');
  if (open == std::string_view::npos) return out;
  const auto close = object_end(raw, open);
  if (!close) return out;
  const auto j = nlohmann::json::parse(raw.substr(open, *close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.contains("rationale") || !j["rationale"].is_object()) return out;
  for (std::size_t i = 0; i < kDimensionKeys.size(); ++i) {
    if (auto it = j["rationale"].find(kDimensionKeys[i]); it != j["rationale"].end() && it->is_string()) {
      out[i] = it->get<std::string>();
    }
  }
  return out;
}

double f1_percent(const std::string& a, const std::string& b) {
  return 100.0 * overlap_f1(token_set(a), token_set(b));
}

}  // namespace

CitevalReport stub_judge(const JudgeInputs& in) {
  const auto tokens = word_tokens(in.citation);
  if (tokens.empty()) return make_report({});
  CitevalScores s;
  s.purpose = f1_percent(in.citation, in.citing_abstract);
  s.accuracy = f1_percent(in.citation, in.cited_abstract);
  s.context_fit = f1_percent(in.citation, in.context);
  s.density = 100.0 * std::min(1.0, static_cast<double>(token_set(in.citation).size()) /
                                        static_cast<double>(tokens.size()));
  auto r = make_report(s);
  r.rationale = {"overlap with citing abstract", "overlap with cited abstract", "overlap with context",
                 "distinct token ratio"};
  return r;
}

std::string stub_judge_response(const JudgeInputs& inputs) {
  const auto r = stub_judge(inputs);
  const nlohmann::json j = {{"purpose", std::lround(r.scores.purpose)},
                            {"accuracy", std::lround(r.scores.accuracy)},
                            {"context_fit", std::lround(r.scores.context_fit)},
                            {"density", std::lround(r.scores.density)},
                            {"rationale",
                             {{"purpose", r.rationale[0]},
                              {"accuracy", r.rationale[1]},
                              {"context_fit", r.rationale[2]},
                              {"density", r.rationale[3]}}}};
  return j.dump();
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("need at least two points");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw std::invalid_argument("zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

JudgeFn stub_judge_fn() {
  return [](const JudgeInputs& inputs, const std::string&) { return stub_judge_response(inputs); };
}

JudgeFn completion_judge_fn(CompletionFn complete) {
  return [complete = std::move(complete)](const JudgeInputs&, const std::string& prompt) { return complete(prompt); };
}

namespace {

JudgeExchange judge_one(const JudgeInputs& inputs, const JudgeFn& judge, const JudgeRunOptions& options) {
  JudgeExchange ex;
  ex.prompt = build_judge_prompt(inputs);
  auto delay = options.backoff;
  for (int attempt = 1; attempt <= std::max(1, options.max_attempts); ++attempt) {
    ex.attempts = attempt;
    try {
      ex.raw_response = judge(inputs, ex.prompt);
      if (auto scores = parse_judge_response(ex.raw_response)) {
        ex.report = make_report(*scores);
        ex.report->rationale = rationale_from_json(ex.raw_response);
        ex.error.clear();
        return ex;
      }
      ex.error = "unparseable judge response";
    } catch (const std::exception& e) {
      ex.error = e.what();
    }
    if (attempt < options.max_attempts) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  return ex;
}

}  // namespace

JudgeRun run_judge(std::span<const JudgeInputs> inputs, const JudgeFn& judge, const JudgeRunOptions& options) {
  JudgeRun run;
  run.exchanges.resize(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next++; i < inputs.size(); i = next++) run.exchanges[i] = judge_one(inputs[i], judge, options);
  };
  const auto workers = std::min(std::max<std::size_t>(1, options.max_in_flight), inputs.size());
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  }

  CitevalScores sum;
  for (const auto& ex : run.exchanges) {
    if (!ex.report) {
      ++run.failed;
      continue;
    }
    ++run.succeeded;
    sum.purpose += ex.report->scores.purpose;
    sum.accuracy += ex.report->scores.accuracy;
    sum.context_fit += ex.report->scores.context_fit;
    sum.density += ex.report->scores.density;
  }
  if (run.succeeded > 0) {
    const auto n = static_cast<double>(run.succeeded);
    run.mean = make_report({sum.purpose / n, sum.accuracy / n, sum.context_fit / n, sum.density / n});
  }

  if (options.audit_log) {
    std::ofstream log(*options.audit_log, std::ios::app);
    if (!log) throw std::runtime_error("cannot open audit log " + options.audit_log->string());
    for (std::size_t i = 0; i < run.exchanges.size(); ++i) {
      const auto& ex = run.exchanges[i];
      nlohmann::json j = {{"request", i}, {"attempts", ex.attempts}, {"prompt", ex.prompt},
                          {"response", ex.raw_response}, {"ok", ex.report.has_value()}};
      if (ex.report) j["report"] = nlohmann::json::parse(report_to_json(*ex.report));
      if (!ex.error.empty()) j["error"] = ex.error;
      log << j.dump() << '\n';
    }
  }
  return run;
}

std::string report_to_json(const CitevalReport& r) {
  nlohmann::json j = {{"purpose", r.scores.purpose},
                      {"accuracy", r.scores.accuracy},
                      {"context_fit", r.scores.context_fit},
                      {"density", r.scores.density},
                      {"composite", r.composite}};
  bool any = false;
  for (const auto& s : r.rationale) any = any || !s.empty();
  if (any) {
    for (std::size_t i = 0; i < kDimensionKeys.size(); ++i) j["rationale"][kDimensionKeys[i]] = r.rationale[i];
  }
  return j.dump();
}

}  // namespace citerec
