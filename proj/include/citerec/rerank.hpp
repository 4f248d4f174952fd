#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/intent_label.hpp"
#include "citerec/retrieval.hpp"

namespace citerec {

struct RerankInput {
  std::string citing_abstract;
  std::string context;
  IntentLabel intent = IntentLabel::kBackground;
  std::string candidate_title;
  std::string candidate_abstract;
  double recall_score = 0.0;
};

inline constexpr int kRerankSchemaVersion = 1;
inline constexpr std::size_t kRerankFeatureCount = 10;
/// Features [kIntentBlockBegin, kRerankFeatureCount) depend on the intent.
inline constexpr std::size_t kIntentBlockBegin = 4;

using RerankFeatures = std::array<double, kRerankFeatureCount>;

/// [recall score, F1(context, candidate abstract), F1(citing abstract,
/// candidate abstract), candidate title appears in context, intent one-hot x3,
/// intent one-hot x context overlap x3].
RerankFeatures featurize(const RerankInput& input);

struct RerankModel {
  int schema_version = kRerankSchemaVersion;
  RerankFeatures weights{};
  double bias = 0.0;
  /// When false the intent block is zeroed before scoring (ablation).
  bool intent_block = true;

  friend bool operator==(const RerankModel&, const RerankModel&) = default;
};

class SchemaMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double sigmoid(double x);

/// sigmoid(w . phi + b). Throws SchemaMismatchError for a model built for a
/// different feature layout.
double score_candidate(const RerankInput& input, const RerankModel& model);

struct LabeledFeatures {
  RerankFeatures features{};
  double label = 0.0;
};

struct RerankTrainOptions {
  std::size_t negatives_per_positive = 5;
  int epochs = 300;
  double learning_rate = 1.0;
  std::uint64_t seed = 7;
  bool intent_block = true;
};

struct RerankTrainResult {
  RerankModel model;
  double initial_bce = 0.0;
  std::vector<double> epoch_bce;
};

/// Full-batch gradient descent on mean binary cross-entropy, starting from
/// the zero model.
RerankTrainResult train_logistic(std::span<const LabeledFeatures> examples,
                                 const RerankTrainOptions& options);

double mean_bce(std::span<const LabeledFeatures> examples, const RerankModel& model);
double accuracy(std::span<const LabeledFeatures> examples, const RerankModel& model);

/// One gold candidate and the recall candidates negatives are drawn from.
struct RerankGroup {
  RerankInput positive;
  std::vector<RerankInput> negative_pool;
};

/// Samples `negatives_per_positive` negatives per group (without
/// replacement) and trains. Throws std::invalid_argument when no group has
/// a negative or negatives_per_positive is zero.
RerankTrainResult train_reranker(std::span<const RerankGroup> groups,
                                 const RerankTrainOptions& options);

/// The query side of a rerank request.
struct RerankQuery {
  std::string citing_abstract;
  std::string context;
  IntentLabel intent = IntentLabel::kBackground;
};

RerankInput make_rerank_input(const RerankQuery& query, const PaperRecord& candidate,
                              double recall_score);

/// Builds a training group from a recall list: the gold paper (scored with
/// its recall score, or 0 when recall missed it) and every other candidate
/// among the first `depth` entries.
std::optional<RerankGroup> make_rerank_group(const RerankQuery& query, const CitationQuery& citation,
                                             const RankedList& recall, const Corpus& corpus,
                                             std::size_t depth = 100);

/// Scores one candidate; nullopt marks a scorer failure for that candidate.
class CandidateScorer {
 public:
  virtual ~CandidateScorer() = default;
  virtual std::optional<double> score(const RerankInput& input) = 0;
};

class LogisticScorer final : public CandidateScorer {
 public:
  explicit LogisticScorer(RerankModel model) : model_(std::move(model)) {}
  std::optional<double> score(const RerankInput& input) override {
    return score_candidate(input, model_);
  }
  const RerankModel& model() const { return model_; }

 private:
  RerankModel model_;
};

struct RerankOutcome {
  RankedList ranking;
  std::size_t scorer_failures = 0;
};

/// Rescores the first `depth` recall entries and sorts them canonically.
/// Candidates the scorer fails on follow, in recall order, with score 0.
RerankOutcome rerank_list(const RankedList& recall, const RerankQuery& query, const Corpus& corpus,
                          CandidateScorer& scorer, std::size_t depth = 100);

void save_rerank_model(const RerankModel& model, const std::filesystem::path& path);
RerankModel load_rerank_model(const std::filesystem::path& path);

}  // namespace citerec
