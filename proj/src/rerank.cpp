#include "citerec/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "citerec/rng.hpp"
#include "citerec/text.hpp"
#include "json.hpp"

namespace citerec {

namespace {

bool title_in_context(const std::string& title, const std::string& context) {
  const auto needle = word_tokens(title);
  if (needle.empty()) return false;
  const auto hay = word_tokens(context);
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

RerankFeatures featurize(const RerankInput& input) {
  const auto context = token_set(input.context);
  const auto candidate = token_set(input.candidate_abstract);
  const double context_overlap = overlap_f1(context, candidate);
  RerankFeatures f{};
  f[0] = input.recall_score;
  f[1] = context_overlap;
  f[2] = overlap_f1(token_set(input.citing_abstract), candidate);
  f[3] = title_in_context(input.candidate_title, input.context) ? 1.0 : 0.0;
  const auto k = index_of(input.intent);
  f[kIntentBlockBegin + k] = 1.0;
  f[kIntentBlockBegin + kIntentCount + k] = context_overlap;
  return f;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

double logit(const RerankFeatures& f, const RerankModel& model) {
  double z = model.bias;
  const std::size_t end = model.intent_block ? kRerankFeatureCount : kIntentBlockBegin;
  for (std::size_t i = 0; i < end; ++i) z += model.weights[i] * f[i];
  return z;
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double score_candidate(const RerankInput& input, const RerankModel& model) {
  if (model.schema_version != kRerankSchemaVersion) {
    throw SchemaMismatchError("rerank model schema " + std::to_string(model.schema_version) +
                              " does not match feature schema " + std::to_string(kRerankSchemaVersion));
  }
  return sigmoid(logit(featurize(input), model));
}

double mean_bce(std::span<const LabeledFeatures> examples, const RerankModel& model) {
  double total = 0.0;
  for (const auto& ex : examples) {
    const double z = logit(ex.features, model);
    // -[y log s(z) + (1 - y) log(1 - s(z))]
    total += ex.label * softplus(-z) + (1.0 - ex.label) * softplus(z);
  }
  return total / static_cast<double>(examples.size());
}

double accuracy(std::span<const LabeledFeatures> examples, const RerankModel& model) {
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const bool predicted = logit(ex.features, model) > 0.0;
    if (predicted == (ex.label > 0.5)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

RerankTrainResult train_logistic(std::span<const LabeledFeatures> examples,
                                 const RerankTrainOptions& options) {
  if (examples.empty()) throw std::invalid_argument("rerank training set is empty");
  RerankTrainResult result;
  result.model.intent_block = options.intent_block;
  result.initial_bce = mean_bce(examples, result.model);
  const double inv_n = 1.0 / static_cast<double>(examples.size());
  const std::size_t active = options.intent_block ? kRerankFeatureCount : kIntentBlockBegin;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    RerankFeatures grad{};
    double grad_bias = 0.0;
    for (const auto& ex : examples) {
      const double err = sigmoid(logit(ex.features, result.model)) - ex.label;
      for (std::size_t i = 0; i < active; ++i) grad[i] += err * ex.features[i];
      grad_bias += err;
    }
    for (std::size_t i = 0; i < active; ++i) result.model.weights[i] -= options.learning_rate * grad[i] * inv_n;
    result.model.bias -= options.learning_rate * grad_bias * inv_n;
    result.epoch_bce.push_back(mean_bce(examples, result.model));
  }
  return result;
}

RerankTrainResult train_reranker(std::span<const RerankGroup> groups,
                                 const RerankTrainOptions& options) {
  if (options.negatives_per_positive == 0) {
    throw std::invalid_argument("negatives_per_positive must be at least 1");
  }
  Rng rng(options.seed);
  std::vector<LabeledFeatures> examples;
  std::size_t positives = 0;
  for (const auto& group : groups) {
    if (group.negative_pool.empty()) continue;
    ++positives;
    examples.push_back({featurize(group.positive), 1.0});
    std::vector<std::size_t> order(group.negative_pool.size());
    std::iota(order.begin(), order.end(), 0);
    const auto take = std::min(options.negatives_per_positive, order.size());
    // Partial Fisher-Yates: the first `take` slots become the sample.
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(order[i], order[i + rng.below(order.size() - i)]);
      examples.push_back({featurize(group.negative_pool[order[i]]), 0.0});
    }
  }
  if (positives == 0) throw std::invalid_argument("rerank training needs a positive with at least one negative");
  return train_logistic(examples, options);
}

RerankInput make_rerank_input(const RerankQuery& query, const PaperRecord& candidate,
                              double recall_score) {
  return RerankInput{query.citing_abstract, query.context, query.intent, candidate.title,
                     candidate.abstract_text, recall_score};
}

std::optional<RerankGroup> make_rerank_group(const RerankQuery& query, const CitationQuery& citation,
                                             const RankedList& recall, const Corpus& corpus,
                                             std::size_t depth) {
  const auto* gold = corpus.find(citation.gold_id);
  if (gold == nullptr) return std::nullopt;
  RerankGroup group;
  double gold_score = 0.0;
  const auto limit = std::min(depth, recall.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& entry = recall[i];
    if (entry.id == citation.gold_id) {
      gold_score = entry.score;
      continue;
    }
    if (const auto* paper = corpus.find(entry.id)) {
      group.negative_pool.push_back(make_rerank_input(query, *paper, entry.score));
    }
  }
  group.positive = make_rerank_input(query, *gold, gold_score);
  return group;
}

RerankOutcome rerank_list(const RankedList& recall, const RerankQuery& query, const Corpus& corpus,
                          CandidateScorer& scorer, std::size_t depth) {
  RerankOutcome out;
  std::vector<RankedEntry> scored;
  std::vector<RankedEntry> failed;
  const auto limit = std::min(depth, recall.size());
  for (std::size_t i = 0; i < limit; ++i) {
    const auto& entry = recall[i];
    const auto* paper = corpus.find(entry.id);
    std::optional<double> s;
    if (paper != nullptr) s = scorer.score(make_rerank_input(query, *paper, entry.score));
    if (s && std::isfinite(*s)) {
      scored.push_back({entry.id, *s});
    } else {
      failed.push_back({entry.id, 0.0});
    }
  }
  out.scorer_failures = failed.size();
  auto ranking = RankedList::from_scores(std::move(scored));
  std::vector<RankedEntry> merged = ranking.entries();
  merged.insert(merged.end(), failed.begin(), failed.end());
  out.ranking = RankedList::from_ordered(std::move(merged));
  return out;
}

void save_rerank_model(const RerankModel& model, const std::filesystem::path& path) {
  nlohmann::json j = {{"schema_version", model.schema_version},
                      {"weights", model.weights},
                      {"bias", model.bias},
                      {"intent_block", model.intent_block}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

RerankModel load_rerank_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  RerankModel model;
  model.schema_version = j.at("schema_version").get<int>();
  if (model.schema_version != kRerankSchemaVersion) {
    throw SchemaMismatchError("rerank model schema " + std::to_string(model.schema_version) + " is not supported");
  }
  const auto weights = j.at("weights").get<std::vector<double>>();
  if (weights.size() != kRerankFeatureCount) throw SchemaMismatchError("rerank model has wrong feature count");
  std::copy(weights.begin(), weights.end(), model.weights.begin());
  model.bias = j.at("bias").get<double>();
  model.intent_block = j.value("intent_block", true);
  return model;
}

}  // namespace citerec
