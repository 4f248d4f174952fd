#include <gtest/gtest.h>

#include <cmath>

#include "citerec/encoder.hpp"
#include "citerec/rng.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

using autodiff::Matrix;

EncoderConfig tiny_config() {
  EncoderConfig c;
  c.d_model = 8;
  c.n_heads = 1;
  c.n_layers_paragraph = 1;
  c.n_layers_document = 1;
  c.vocab_buckets = 16;
  c.max_tokens = 8;
  c.seed = 5;
  return c;
}

Matrix random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
  }
  return m;
}

TEST(EncoderConfig, RejectsHeadsThatDoNotDivideWidth) {
  EncoderConfig c;
  c.d_model = 10;
  c.n_heads = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.n_heads = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Tokenize, EmptyTextMapsToReservedToken) {
  const auto c = tiny_config();
  EXPECT_EQ(tokenize("", c), std::vector<int>{kEmptyTokenId});
  for (int t : tokenize("alpha beta gamma delta epsilon zeta eta theta iota kappa", c)) {
    EXPECT_GE(t, 1);
    EXPECT_LT(t, c.vocab_buckets);
  }
  EXPECT_EQ(tokenize("a b c d e f g h i j k l", c).size(), static_cast<std::size_t>(c.max_tokens));
}

TEST(Pooling, SoftmaxOverTwoTokens) {
  // One head whose score is the first input column: scores (ln 2, 0).
  PoolingWeights w;
  w.score_w.value = Matrix::Zero(2, 1);
  w.score_w.value(0, 0) = 1.0;
  w.score_b.value = Matrix::Zero(1, 1);
  w.value_w.value = Matrix::Identity(2, 2);
  w.value_b.value = Matrix::Zero(1, 2);
  w.out_w.value = Matrix::Identity(2, 2);
  w.out_b.value = Matrix::Zero(1, 2);
  Matrix x(2, 2);
  x << std::log(2.0), 0.0, 0.0, 1.0;
  const auto r = multi_head_pool(x, w, 1);
  EXPECT_NEAR(r.attention(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.attention(1, 0), 1.0 / 3.0, 1e-12);
}

TEST(Pooling, EmptyInputIsRejected) {
  const auto w = EncoderWeights::initialize(tiny_config());
  EXPECT_THROW(multi_head_pool(Matrix(0, 8), w.paragraph_pool, 1), std::invalid_argument);
}

TEST(PoolingProperty, AttentionColumnsSumToOne) {
  EncoderConfig c;
  c.d_model = 16;
  c.n_heads = 4;
  const auto w = EncoderWeights::initialize(c);
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(20));
    const auto r = multi_head_pool(random_matrix(rng, n, c.d_model, 5.0), w.paragraph_pool, c.n_heads);
    ASSERT_EQ(r.attention.cols(), c.n_heads);
    for (int h = 0; h < c.n_heads; ++h) {
      EXPECT_NEAR(r.attention.col(h).sum(), 1.0, 1e-6);
      EXPECT_GE(r.attention.col(h).minCoeff(), 0.0);
    }
  }
}

TEST(Encoder, DocumentEmbeddingHasUnitNorm) {
  EncoderConfig c;
  const auto w = EncoderWeights::initialize(c);
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::string text;
    for (int i = 0; i < 12; ++i) text += "w" + std::to_string(rng.below(200)) + " ";
    const auto e = embed_document(make_document({text, text + "x", ""}, c), w);
    EXPECT_NEAR(e.norm(), 1.0, 1e-12);
  }
}

TEST(Encoder, TokenPermutationInvariantWithoutPositions) {
  EncoderConfig c;
  c.positional_encoding = false;
  const auto w = EncoderWeights::initialize(c);
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    ParagraphInput p{{}, ParagraphType::kAbstract};
    for (int i = 0; i < 10; ++i) p.tokens.push_back(1 + static_cast<int>(rng.below(c.vocab_buckets - 1)));
    const auto base = embed_paragraph(p, w);
    rng.shuffle(std::span(p.tokens));
    EXPECT_EQ(embed_paragraph(p, w), base);
  }
}

TEST(Encoder, PositionsMakeOrderMatter) {
  const auto c = EncoderConfig{};
  const auto w = EncoderWeights::initialize(c);
  const ParagraphInput a{{3, 7, 11}, ParagraphType::kTitle};
  const ParagraphInput b{{11, 7, 3}, ParagraphType::kTitle};
  EXPECT_NE(embed_paragraph(a, w), embed_paragraph(b, w));
}

TEST(Encoder, TitleAndAbstractRolesAreDistinguished) {
  const EncoderConfig c;
  const auto w = EncoderWeights::initialize(c);
  const auto a = embed_document(make_document({"graph networks", "attention pooling layers", ""}, c), w);
  const auto b = embed_document(make_document({"attention pooling layers", "graph networks", ""}, c), w);
  EXPECT_GT((a - b).norm(), 1e-6);
}

TEST(Encoder, InitializationIsSeeded) {
  auto c = tiny_config();
  EXPECT_TRUE(EncoderWeights::initialize(c) == EncoderWeights::initialize(c));
  auto other = c;
  other.seed = 6;
  EXPECT_FALSE(EncoderWeights::initialize(c) == EncoderWeights::initialize(other));
  const auto w = EncoderWeights::initialize(c);
  for (const auto* p : w.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      EXPECT_EQ(p->value.data()[i], round_to_float(p->value.data()[i])) << p->name;
    }
  }
}

TEST(TripletLoss, Hinge) {
  EXPECT_DOUBLE_EQ(triplet_loss(0.9, 0.1, 0.2), 0.0);
  EXPECT_NEAR(triplet_loss(0.5, 0.4, 0.2), 0.1, 1e-15);
}

double loss_at(EncoderWeights& w, const DocumentInput& a, const DocumentInput& p, const DocumentInput& n,
               double margin) {
  return triplet_loss(embed_document(a, w).dot(embed_document(p, w)), embed_document(a, w).dot(embed_document(n, w)),
                      margin);
}

TEST(EncoderGradient, AnalyticMatchesCentralDifferences) {
  const auto c = tiny_config();
  auto w = EncoderWeights::initialize(c);
  auto doc = [](std::vector<int> t, std::vector<int> a, std::vector<int> x) {
    return DocumentInput{{std::move(t), ParagraphType::kTitle},
                         {std::move(a), ParagraphType::kAbstract},
                         {std::move(x), ParagraphType::kContext}};
  };
  const auto anchor = doc({1, 2, 3}, {4, 5, 6}, {7, 8, 9});
  const auto positive = doc({2, 10, 11}, {3, 12, 13}, {0});
  const auto negative = doc({14, 15, 1}, {6, 9, 12}, {0});
  const double margin = 10.0;  // keeps the hinge active

  const double loss = triplet_loss_and_grad(w, anchor, positive, negative, margin);
  ASSERT_GT(loss, 0.0);
  const double h = 1e-4;
  double diff_sq = 0.0, analytic_sq = 0.0, numeric_sq = 0.0;
  for (auto* p : w.parameters()) {
    const Matrix analytic = p->grad.size() ? p->grad : Matrix::Zero(p->value.rows(), p->value.cols());
    Matrix numeric(p->value.rows(), p->value.cols());
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      const double saved = p->value.data()[i];
      p->value.data()[i] = saved + h;
      const double up = loss_at(w, anchor, positive, negative, margin);
      p->value.data()[i] = saved - h;
      const double down = loss_at(w, anchor, positive, negative, margin);
      p->value.data()[i] = saved;
      numeric.data()[i] = (up - down) / (2 * h);
    }
    EXPECT_LT((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6) << p->name;
    diff_sq += (analytic - numeric).squaredNorm();
    analytic_sq += analytic.squaredNorm();
    numeric_sq += numeric.squaredNorm();
  }
  EXPECT_LT(std::sqrt(diff_sq) / (std::sqrt(analytic_sq) + std::sqrt(numeric_sq)), 1e-4);
}

Corpus training_corpus() {
  Corpus corpus;
  const std::vector<std::string> topics = {"graph network node", "language model token", "image pixel conv"};
  for (int i = 0; i < 12; ++i) {
    PaperRecord p;
    p.id = "T" + std::to_string(i);
    p.title = topics[i % 3] + " " + std::to_string(i);
    p.abstract_text = "we study " + topics[i % 3];
    corpus.papers.emplace(p.id, p);
  }
  for (int i = 0; i < 12; ++i) {
    auto& p = corpus.papers.at("T" + std::to_string(i));
    p.references.insert("T" + std::to_string((i + 3) % 12));
    corpus.queries.push_back({"q" + std::to_string(i), p.id, "as in " + topics[i % 3], {},
                              "T" + std::to_string((i + 3) % 12), std::nullopt});
  }
  return corpus;
}

TEST(EncoderTraining, ZeroEpochsReturnsInitialWeights) {
  const auto corpus = training_corpus();
  const auto init = EncoderWeights::initialize(tiny_config());
  EncoderTrainOptions options;
  options.epochs = 0;
  const auto r = train_encoder(corpus, corpus.queries, init, options);
  EXPECT_TRUE(r.weights == init);
  EXPECT_TRUE(r.epoch_losses.empty());
}

TEST(EncoderTraining, IsDeterministicAndLowersLoss) {
  const auto corpus = training_corpus();
  EncoderConfig c = tiny_config();
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_buckets = 256;
  EncoderTrainOptions options;
  options.epochs = 15;
  options.batch_size = 4;
  const auto a = train_encoder(corpus, corpus.queries, EncoderWeights::initialize(c), options);
  const auto b = train_encoder(corpus, corpus.queries, EncoderWeights::initialize(c), options);
  EXPECT_TRUE(a.weights == b.weights);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
  ASSERT_EQ(a.epoch_losses.size(), 15u);
  EXPECT_LT(a.epoch_losses.back(), a.initial_loss);
}

TEST(EncoderTraining, EmptyTrainingSetIsRejected) {
  const auto corpus = training_corpus();
  EXPECT_THROW(train_encoder(corpus, {}, EncoderWeights::initialize(tiny_config()), {}), std::invalid_argument);
}

TEST(EncoderPersistence, SaveLoadRoundTrip) {
  testing::TempDir dir;
  const auto w = EncoderWeights::initialize(tiny_config());
  save_encoder(w, dir.path());
  const auto loaded = load_encoder(dir.path());
  EXPECT_TRUE(loaded == w);
  EXPECT_EQ(fingerprint(loaded), fingerprint(w));
}

}  // namespace
}  // namespace citerec
