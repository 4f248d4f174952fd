#include "citerec/intent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "citerec/corpus.hpp"
#include "citerec/rng.hpp"
#include "citerec/tensor_store.hpp"
#include "json.hpp"

namespace citerec {

namespace {

constexpr int kModelFormatVersion = 1;

}  // namespace

IntentModel IntentModel::zeros(const IntentModelConfig& config) {
  IntentModel m;
  m.config = config;
  m.w1 = Matrix::Zero(config.buckets, config.hidden);
  m.b1 = Eigen::RowVectorXd::Zero(config.hidden);
  m.w2 = Matrix::Zero(config.hidden, static_cast<Eigen::Index>(kIntentCount));
  m.b2 = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(kIntentCount));
  return m;
}

IntentModel IntentModel::initialize(const IntentModelConfig& config, std::uint64_t seed) {
  if (config.buckets < 1 || config.hidden < 1 || config.dropout < 0.0 || config.dropout >= 1.0) {
    throw std::invalid_argument("invalid intent model configuration");
  }
  auto m = zeros(config);
  Rng rng(seed);
  auto fill = [&rng](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = round_to_float(rng.uniform(-limit, limit));
  };
  fill(m.w1);
  fill(m.w2);
  return m;
}

std::vector<int> intent_features(std::string_view sentence, int buckets) {
  std::vector<int> out;
  for (const auto& word : word_tokens(sentence)) {
    out.push_back(static_cast<int>(fnv1a64(word) % static_cast<std::uint64_t>(buckets)));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

Eigen::RowVectorXd hidden_preactivation(std::span<const int> features, const IntentModel& m) {
  Eigen::RowVectorXd z = m.b1;
  for (int f : features) z += m.w1.row(f);
  return z;
}

IntentProbabilities softmax3(const Eigen::RowVectorXd& logits) {
  const double mx = logits.maxCoeff();
  IntentProbabilities p{};
  double sum = 0.0;
  for (std::size_t k = 0; k < kIntentCount; ++k) {
    p[k] = std::exp(logits(static_cast<Eigen::Index>(k)) - mx);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

IntentProbabilities forward(std::span<const int> features, const IntentModel& m) {
  const Eigen::RowVectorXd h = hidden_preactivation(features, m).cwiseMax(0.0);
  return softmax3(h * m.w2 + m.b2);
}

}  // namespace

IntentProbabilities classify_intent(std::string_view sentence, const IntentModel& model) {
  return forward(intent_features(sentence, model.config.buckets), model);
}

IntentLabel argmax_intent(const IntentProbabilities& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kIntentCount; ++k) {
    if (p[k] > p[best]) best = k;
  }
  return kAllIntents[best];
}

IntentLabel predict_intent(std::string_view sentence, const IntentModel& model) {
  return argmax_intent(classify_intent(sentence, model));
}

double mean_cross_entropy(std::span<const LabeledSentence> data, const IntentModel& model) {
  double total = 0.0;
  for (const auto& s : data) {
    const auto p = classify_intent(s.text, model);
    total -= std::log(std::max(p[index_of(s.label)], 1e-300));
  }
  return total / static_cast<double>(data.size());
}

namespace {

struct AdamState {
  IntentModel::Matrix m_w1, v_w1, m_w2, v_w2;
  Eigen::RowVectorXd m_b1, v_b1, m_b2, v_b2;
  long step = 0;
};

template <typename P, typename G, typename S>
void adam_update(P& param, const G& grad, S& m, S& v, const IntentTrainOptions& o, double c1, double c2) {
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  param.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
}

}  // namespace

IntentTrainResult train_intent(std::span<const LabeledSentence> data, const IntentModelConfig& config,
                               const IntentTrainOptions& options) {
  std::array<std::size_t, kIntentCount> counts{};
  for (const auto& s : data) ++counts[index_of(s.label)];
  for (std::size_t k = 0; k < kIntentCount; ++k) {
    if (counts[k] == 0) {
      throw std::invalid_argument("intent training data has no " + std::string(to_string(kAllIntents[k])) +
                                  " examples");
    }
  }
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");

  IntentTrainResult result{IntentModel::initialize(config, options.seed), 0.0, {}};
  result.initial_loss = mean_cross_entropy(data, result.model);
  if (options.epochs <= 0) return result;

  auto& m = result.model;
  std::vector<std::vector<int>> features;
  features.reserve(data.size());
  for (const auto& s : data) features.push_back(intent_features(s.text, config.buckets));

  AdamState adam;
  adam.m_w1 = adam.v_w1 = IntentModel::Matrix::Zero(m.w1.rows(), m.w1.cols());
  adam.m_w2 = adam.v_w2 = IntentModel::Matrix::Zero(m.w2.rows(), m.w2.cols());
  adam.m_b1 = adam.v_b1 = Eigen::RowVectorXd::Zero(m.b1.size());
  adam.m_b2 = adam.v_b2 = Eigen::RowVectorXd::Zero(m.b2.size());

  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  const double keep = 1.0 - config.dropout;
  std::vector<std::size_t> order(data.size());
  IntentModel::Matrix g_w1 = IntentModel::Matrix::Zero(m.w1.rows(), m.w1.cols());
  IntentModel::Matrix g_w2(m.w2.rows(), m.w2.cols());
  Eigen::RowVectorXd g_b1(m.b1.size()), g_b2(m.b2.size());
  std::vector<int> touched;

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto end = std::min(order.size(), start + options.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      g_w2.setZero();
      g_b1.setZero();
      g_b2.setZero();
      for (int row : touched) g_w1.row(row).setZero();
      touched.clear();
      for (std::size_t i = start; i < end; ++i) {
        const auto& f = features[order[i]];
        const Eigen::RowVectorXd z = hidden_preactivation(f, m);
        Eigen::RowVectorXd mask(z.size());
        for (Eigen::Index u = 0; u < mask.size(); ++u) {
          mask(u) = (config.dropout > 0.0 && !rng.bernoulli(keep)) ? 0.0 : 1.0 / keep;
        }
        const Eigen::RowVectorXd h = z.cwiseMax(0.0).cwiseProduct(mask);
        const auto p = softmax3(h * m.w2 + m.b2);
        const auto y = index_of(data[order[i]].label);
        epoch_loss -= std::log(std::max(p[y], 1e-300));
        Eigen::RowVectorXd d_logits(static_cast<Eigen::Index>(kIntentCount));
        for (std::size_t k = 0; k < kIntentCount; ++k) {
          d_logits(static_cast<Eigen::Index>(k)) = (p[k] - (k == y ? 1.0 : 0.0)) * inv_b;
        }
        g_w2.noalias() += h.transpose() * d_logits;
        g_b2 += d_logits;
        Eigen::RowVectorXd d_h = d_logits * m.w2.transpose();
        d_h = d_h.cwiseProduct(mask);
        for (Eigen::Index u = 0; u < d_h.size(); ++u) {
          if (z(u) <= 0.0) d_h(u) = 0.0;
        }
        g_b1 += d_h;
        for (int fidx : f) {
          g_w1.row(fidx) += d_h;
          touched.push_back(fidx);
        }
      }
      ++adam.step;
      const double c1 = 1.0 - std::pow(options.beta1, static_cast<double>(adam.step));
      const double c2 = 1.0 - std::pow(options.beta2, static_cast<double>(adam.step));
      adam_update(m.w1, g_w1, adam.m_w1, adam.v_w1, options, c1, c2);
      adam_update(m.b1, g_b1, adam.m_b1, adam.v_b1, options, c1, c2);
      adam_update(m.w2, g_w2, adam.m_w2, adam.v_w2, options, c1, c2);
      adam_update(m.b2, g_b2, adam.m_b2, adam.v_b2, options, c1, c2);
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  auto round_all = [](auto& x) { x = x.unaryExpr([](double v) { return round_to_float(v); }); };
  round_all(m.w1);
  round_all(m.b1);
  round_all(m.w2);
  round_all(m.b2);
  return result;
}

IntentMetrics metrics_from_predictions(std::span<const IntentLabel> truth,
                                       std::span<const IntentLabel> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("prediction count does not match labels");
  IntentMetrics out;
  out.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) ++out.confusion[index_of(truth[i])][index_of(predicted[i])];
  std::size_t correct = 0;
  for (std::size_t k = 0; k < kIntentCount; ++k) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < kIntentCount; ++j) {
      row += out.confusion[k][j];
      col += out.confusion[j][k];
    }
    const auto tp = out.confusion[k][k];
    correct += tp;
    auto& c = out.per_class[k];
    c.support = row;
    c.precision = col ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    c.recall = row ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall) : 0.0;
    out.macro_precision += c.precision / kIntentCount;
    out.macro_recall += c.recall / kIntentCount;
    out.macro_f1 += c.f1 / kIntentCount;
  }
  out.accuracy = out.total ? static_cast<double>(correct) / static_cast<double>(out.total) : 0.0;
  return out;
}

IntentMetrics evaluate_intent(const IntentModel& model, std::span<const LabeledSentence> test) {
  std::vector<IntentLabel> truth, predicted;
  for (const auto& s : test) {
    truth.push_back(s.label);
    predicted.push_back(predict_intent(s.text, model));
  }
  return metrics_from_predictions(truth, predicted);
}

CrossValidationResult cross_validate_intent(std::span<const LabeledSentence> data, std::size_t folds,
                                            const IntentModelConfig& config,
                                            const IntentTrainOptions& options) {
  if (folds < 2 || folds > data.size()) throw std::invalid_argument("fold count must be in [2, n]");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(options.seed + 1);
  rng.shuffle(std::span(order));

  CrossValidationResult out;
  std::vector<IntentLabel> truth, predicted;
  for (std::size_t fold = 0; fold < folds; ++fold) {
    std::vector<LabeledSentence> train, test;
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i % folds == fold ? test : train).push_back(data[order[i]]);
    }
    const auto trained = train_intent(train, config, options);
    std::vector<IntentLabel> fold_truth, fold_pred;
    for (const auto& s : test) {
      fold_truth.push_back(s.label);
      fold_pred.push_back(predict_intent(s.text, trained.model));
    }
    out.fold_macro_f1.push_back(metrics_from_predictions(fold_truth, fold_pred).macro_f1);
    truth.insert(truth.end(), fold_truth.begin(), fold_truth.end());
    predicted.insert(predicted.end(), fold_pred.begin(), fold_pred.end());
  }
  out.pooled = metrics_from_predictions(truth, predicted);
  return out;
}

std::string metrics_to_json(const IntentMetrics& metrics) {
  nlohmann::json j;
  j["total"] = metrics.total;
  j["accuracy"] = metrics.accuracy;
  j["macro"] = {{"precision", metrics.macro_precision}, {"recall", metrics.macro_recall}, {"f1", metrics.macro_f1}};
  for (std::size_t k = 0; k < kIntentCount; ++k) {
    const auto& c = metrics.per_class[k];
    j["classes"][std::string(to_string(kAllIntents[k]))] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  j["confusion"] = metrics.confusion;
  return j.dump();
}

std::string metrics_to_text(const IntentMetrics& metrics) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "class        precision  recall     f1         support\n";
  for (std::size_t k = 0; k < kIntentCount; ++k) {
    const auto& c = metrics.per_class[k];
    std::string name(to_string(kAllIntents[k]));
    name.resize(12, ' ');
    out << name << ' ' << c.precision << "     " << c.recall << "     " << c.f1 << "     " << c.support << '\n';
  }
  out << "macro        " << metrics.macro_precision << "     " << metrics.macro_recall << "     "
      << metrics.macro_f1 << "     " << metrics.total << '\n';
  out << "accuracy     " << metrics.accuracy << '\n';
  out << "confusion (rows = true, cols = predicted: background method comparative)\n";
  for (const auto& row : metrics.confusion) {
    out << "  " << row[0] << ' ' << row[1] << ' ' << row[2] << '\n';
  }
  return out.str();
}

std::string confusion_matrix_svg(const IntentMetrics& metrics) {
  constexpr int cell = 90, margin = 120;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << margin + 3 * cell + 20 << "\" height=\""
      << margin + 3 * cell + 20 << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  for (std::size_t r = 0; r < kIntentCount; ++r) {
    std::size_t row_total = 0;
    for (auto v : metrics.confusion[r]) row_total += v;
    for (std::size_t c = 0; c < kIntentCount; ++c) {
      const double share = row_total ? static_cast<double>(metrics.confusion[r][c]) / static_cast<double>(row_total) : 0.0;
      const int shade = 255 - static_cast<int>(std::lround(share * 200.0));
      const int x = margin + static_cast<int>(c) * cell;
      const int y = margin + static_cast<int>(r) * cell;
      svg << "  <rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#333\"/>\n";
      svg << "  <text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 << "\" text-anchor=\"middle\">"
          << metrics.confusion[r][c] << "</text>\n";
    }
    svg << "  <text x=\"" << margin - 8 << "\" y=\"" << margin + static_cast<int>(r) * cell + cell / 2
        << "\" text-anchor=\"end\">" << to_string(kAllIntents[r]) << "</text>\n";
    svg << "  <text x=\"" << margin + static_cast<int>(r) * cell + cell / 2 << "\" y=\"" << margin - 8
        << "\" text-anchor=\"middle\">" << to_string(kAllIntents[r]) << "</text>\n";
  }
  svg << "  <text x=\"10\" y=\"20\">rows: true label, columns: predicted</text>\n</svg>\n";
  return svg.str();
}

std::vector<LabeledSentence> load_labeled_sentences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  std::vector<LabeledSentence> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError(line, "not a JSON object");
    std::string sentence;
    for (const char* key : {"text", "string", "context"}) {
      if (j.contains(key) && j[key].is_string()) {
        sentence = j[key].get<std::string>();
        break;
      }
    }
    std::optional<IntentLabel> label;
    for (const char* key : {"label", "intent"}) {
      if (j.contains(key) && j[key].is_string()) {
        label = parse_intent(j[key].get<std::string>());
        break;
      }
    }
    if (sentence.empty()) throw ParseError(line, "missing sentence text");
    if (!label) throw ParseError(line, "missing or unknown intent label");
    out.push_back({std::move(sentence), *label});
  }
  return out;
}

std::string to_json_line(const LabeledSentence& sentence) {
  return nlohmann::json{{"text", sentence.text}, {"label", std::string(to_string(sentence.label))}}.dump();
}

void save_intent_model(const IntentModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.set("format", "citerec-intent");
  manifest.set("format_version", kModelFormatVersion);
  manifest.set("buckets", model.config.buckets);
  manifest.set("hidden", model.config.hidden);
  std::ostringstream dropout;
  dropout.precision(17);
  dropout << model.config.dropout;
  manifest.set("dropout", dropout.str());
  Bytes payload;
  auto append = [&payload](const auto& m) {
    std::vector<float> data(static_cast<std::size_t>(m.size()));
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(m.data()[i]);
    append_f32le(payload, data);
  };
  append(model.w1);
  append(model.b1);
  append(model.w2);
  append(model.b2);
  manifest.set("weights.bin.crc32", crc32_hex(payload));
  write_bytes(dir / "weights.bin", payload);
  manifest.write(dir / "manifest.txt");
}

IntentModel load_intent_model(const std::filesystem::path& dir) {
  const auto manifest = Manifest::read(dir / "manifest.txt");
  if (manifest.require("format") != "citerec-intent") throw FormatError("not an intent model directory");
  if (manifest.require_int("format_version") != kModelFormatVersion) {
    throw VersionMismatchError("unsupported intent model version " + manifest.require("format_version"));
  }
  IntentModelConfig config;
  config.buckets = static_cast<int>(manifest.require_int("buckets"));
  config.hidden = static_cast<int>(manifest.require_int("hidden"));
  config.dropout = manifest.require_double("dropout");
  auto model = IntentModel::zeros(config);
  const auto values = decode_f32le(read_checked(dir, manifest, "weights.bin"));
  const auto expected = static_cast<std::size_t>(model.w1.size() + model.b1.size() + model.w2.size() + model.b2.size());
  if (values.size() != expected) throw FormatError("intent weights have the wrong size");
  std::size_t at = 0;
  auto take = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = values[at++];
  };
  take(model.w1);
  take(model.b1);
  take(model.w2);
  take(model.b2);
  return model;
}

}  // namespace citerec
