#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citerec/autodiff.hpp"
#include "citerec/corpus.hpp"
#include "citerec/tensor_store.hpp"

namespace citerec {

struct EncoderConfig {
  int d_model = 64;
  int n_heads = 4;
  int n_layers_paragraph = 1;
  int n_layers_document = 1;
  int vocab_buckets = 4096;
  int max_tokens = 128;
  int ffn_multiplier = 2;
  std::uint64_t seed = 1;
  bool positional_encoding = true;

  /// Throws std::invalid_argument when a dimension is < 1 or n_heads does
  /// not divide d_model.
  void validate() const;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

enum class ParagraphType : std::uint8_t { kTitle = 0, kAbstract = 1, kContext = 2 };

struct ParagraphInput {
  std::vector<int> tokens;
  ParagraphType type = ParagraphType::kTitle;
};

/// Token id reserved for an empty paragraph. Hashed words never map to it.
inline constexpr int kEmptyTokenId = 0;

/// Lowercase, split on non-alphanumerics, hash each word into
/// [1, vocab_buckets). Empty text yields {kEmptyTokenId}. Truncated to
/// max_tokens.
std::vector<int> tokenize(std::string_view text, const EncoderConfig& config);

struct TransformerLayerWeights {
  autodiff::Parameter q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  autodiff::Parameter ln1_gain, ln1_bias;
  autodiff::Parameter ff1_w, ff1_b, ff2_w, ff2_b;
  autodiff::Parameter ln2_gain, ln2_bias;
};

/// Multi-head attention pooling: per-head scalar scores (score_w), per-head
/// value maps (value_w, head j owns a d/heads column block), and the output
/// projection applied after ReLU of the concatenated head vectors.
struct PoolingWeights {
  autodiff::Parameter score_w, score_b;
  autodiff::Parameter value_w, value_b;
  autodiff::Parameter out_w, out_b;
};

struct EncoderWeights {
  EncoderConfig config;
  autodiff::Parameter token_embedding;
  std::vector<TransformerLayerWeights> paragraph_layers;
  PoolingWeights paragraph_pool;
  /// Rows: title, abstract, context.
  autodiff::Parameter type_embedding;
  std::vector<TransformerLayerWeights> document_layers;
  PoolingWeights document_pool;

  /// Seeded Xavier-uniform initialization, rounded to float precision.
  static EncoderWeights initialize(const EncoderConfig& config);

  /// Stable order; names are unique.
  std::vector<autodiff::Parameter*> parameters();
  std::vector<const autodiff::Parameter*> parameters() const;

  void zero_grad();
  std::size_t parameter_count() const;
};

bool operator==(const EncoderWeights& a, const EncoderWeights& b);

struct DocumentText {
  std::string title;
  std::string abstract_text;
  std::string context;
};

struct DocumentInput {
  ParagraphInput title;
  ParagraphInput abstract_text;
  ParagraphInput context;
};

DocumentInput make_document(const DocumentText& text, const EncoderConfig& config);

struct PoolingResult {
  autodiff::Matrix attention;  // n x heads, columns sum to one
  autodiff::Matrix output;     // 1 x d
};

/// Pools token vectors `x` (n x d) into one vector. Throws
/// std::invalid_argument on an empty input.
PoolingResult multi_head_pool(const autodiff::Matrix& x, const PoolingWeights& weights,
                              int n_heads);

/// Sinusoidal position table, n x d.
autodiff::Matrix positional_encoding(int n, int d);

Eigen::RowVectorXd embed_paragraph(const ParagraphInput& paragraph, const EncoderWeights& weights);

/// Unit L2 norm.
Eigen::RowVectorXd embed_document(const DocumentInput& document, const EncoderWeights& weights);

autodiff::Var encode_paragraph(autodiff::Tape& tape, const ParagraphInput& paragraph,
                               EncoderWeights& weights);
autodiff::Var encode_document(autodiff::Tape& tape, const DocumentInput& document,
                              EncoderWeights& weights);

/// max(0, margin - cos(anchor, positive) + cos(anchor, negative)).
double triplet_loss(double cos_positive, double cos_negative, double margin);

/// Zeroes the gradients, then evaluates the triplet loss and accumulates its
/// gradient into every parameter's `grad`.
double triplet_loss_and_grad(EncoderWeights& weights, const DocumentInput& anchor,
                             const DocumentInput& positive, const DocumentInput& negative,
                             double margin);

struct EncoderTrainOptions {
  int epochs = 30;
  double learning_rate = 0.05;
  double margin = 0.2;
  std::size_t batch_size = 16;
  std::uint64_t seed = 42;
};

struct EncoderTrainResult {
  EncoderWeights weights;
  /// Mean loss of the first epoch's triplets under the initial weights.
  double initial_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Triplet training: anchor = citing title + abstract + local context,
/// positive = gold paper, negative = another in-batch gold.
EncoderTrainResult train_encoder(const Corpus& corpus, std::span<const CitationQuery> queries,
                                 EncoderWeights initial, const EncoderTrainOptions& options);

DocumentText query_document(const Corpus& corpus, const CitationQuery& query);
DocumentText candidate_document(const PaperRecord& paper);

void append_encoder(const EncoderWeights& weights, Manifest& manifest, Bytes& payload);
EncoderWeights read_encoder(const Manifest& manifest, std::span<const std::byte> payload);

void save_encoder(const EncoderWeights& weights, const std::filesystem::path& dir);
EncoderWeights load_encoder(const std::filesystem::path& dir);

/// CRC of the serialized weights.
std::string fingerprint(const EncoderWeights& weights);

}  // namespace citerec
