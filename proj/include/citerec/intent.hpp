#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citerec/intent_label.hpp"
#include "citerec/text.hpp"

namespace citerec {

struct IntentModelConfig {
  int buckets = 8192;
  int hidden = 256;
  double dropout = 0.1;

  friend bool operator==(const IntentModelConfig&, const IntentModelConfig&) = default;
};

/// Hashed bag-of-words -> hidden ReLU layer (dropout while training) -> 3
/// logits -> softmax.
struct IntentModel {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  IntentModelConfig config;
  Matrix w1;               // buckets x hidden
  Eigen::RowVectorXd b1;   // hidden
  Matrix w2;               // hidden x 3
  Eigen::RowVectorXd b2;   // 3

  static IntentModel zeros(const IntentModelConfig& config);
  /// Xavier-uniform weights, zero biases, rounded to float precision.
  static IntentModel initialize(const IntentModelConfig& config, std::uint64_t seed);

  friend bool operator==(const IntentModel&, const IntentModel&) = default;
};

/// Distinct bucket indices of the sentence's words, ascending.
std::vector<int> intent_features(std::string_view sentence, int buckets);

using IntentProbabilities = std::array<double, kIntentCount>;

IntentProbabilities classify_intent(std::string_view sentence, const IntentModel& model);

/// Argmax; ties go to the earlier label.
IntentLabel predict_intent(std::string_view sentence, const IntentModel& model);
IntentLabel argmax_intent(const IntentProbabilities& p);

struct LabeledSentence {
  std::string text;
  IntentLabel label = IntentLabel::kBackground;

  friend bool operator==(const LabeledSentence&, const LabeledSentence&) = default;
};

struct IntentTrainOptions {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 11;
};

struct IntentTrainResult {
  IntentModel model;
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Adam on mean cross-entropy. Throws std::invalid_argument if any of the
/// three classes has no example.
IntentTrainResult train_intent(std::span<const LabeledSentence> data, const IntentModelConfig& config,
                               const IntentTrainOptions& options);

double mean_cross_entropy(std::span<const LabeledSentence> data, const IntentModel& model);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct IntentMetrics {
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, kIntentCount>, kIntentCount> confusion{};
  std::array<ClassMetrics, kIntentCount> per_class{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t total = 0;
};

IntentMetrics metrics_from_predictions(std::span<const IntentLabel> truth,
                                       std::span<const IntentLabel> predicted);
IntentMetrics evaluate_intent(const IntentModel& model, std::span<const LabeledSentence> test);

struct CrossValidationResult {
  /// Computed over the pooled out-of-fold predictions.
  IntentMetrics pooled;
  std::vector<double> fold_macro_f1;
};

CrossValidationResult cross_validate_intent(std::span<const LabeledSentence> data, std::size_t folds,
                                            const IntentModelConfig& config,
                                            const IntentTrainOptions& options);

std::string metrics_to_json(const IntentMetrics& metrics);
std::string metrics_to_text(const IntentMetrics& metrics);
/// Heat-map of the confusion matrix as a standalone SVG document.
std::string confusion_matrix_svg(const IntentMetrics& metrics);

/// Line-delimited records with a text field ("text", "string" or "context")
/// and a label field ("label" or "intent").
std::vector<LabeledSentence> load_labeled_sentences(const std::filesystem::path& path);
std::string to_json_line(const LabeledSentence& sentence);

void save_intent_model(const IntentModel& model, const std::filesystem::path& dir);
IntentModel load_intent_model(const std::filesystem::path& dir);

}  // namespace citerec
