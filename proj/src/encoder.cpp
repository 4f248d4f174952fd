#include "citerec/encoder.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "citerec/rng.hpp"
#include "citerec/text.hpp"

namespace citerec {

using autodiff::Matrix;
using autodiff::Parameter;
using autodiff::Tape;
using autodiff::Var;

namespace {

constexpr int kFormatVersion = 1;

}  // namespace

void EncoderConfig::validate() const {
  if (d_model < 1 || n_heads < 1 || n_layers_paragraph < 0 || n_layers_document < 0 ||
      vocab_buckets < 2 || max_tokens < 1 || ffn_multiplier < 1) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("n_heads must divide d_model");
  }
}

std::vector<int> tokenize(std::string_view text, const EncoderConfig& config) {
  std::vector<int> ids;
  for (const auto& word : word_tokens(text)) {
    if (static_cast<int>(ids.size()) == config.max_tokens) break;
    const auto bucket = fnv1a64(word) % static_cast<std::uint64_t>(config.vocab_buckets - 1);
    ids.push_back(static_cast<int>(bucket) + 1);
  }
  if (ids.empty()) ids.push_back(kEmptyTokenId);
  return ids;
}

namespace {

Parameter make_param(std::string name, Matrix value) {
  Parameter p;
  p.name = std::move(name);
  p.value = std::move(value);
  return p;
}

Matrix uniform_matrix(Rng& rng, int rows, int cols, double limit) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = round_to_float(rng.uniform(-limit, limit));
  return m;
}

Parameter xavier(Rng& rng, std::string name, int fan_in, int fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return make_param(std::move(name), uniform_matrix(rng, fan_in, fan_out, limit));
}

Parameter zeros(std::string name, int rows, int cols) {
  return make_param(std::move(name), Matrix::Zero(rows, cols));
}

Parameter ones(std::string name, int rows, int cols) {
  return make_param(std::move(name), Matrix::Ones(rows, cols));
}

TransformerLayerWeights make_layer(Rng& rng, const std::string& prefix, int d, int ff) {
  TransformerLayerWeights l;
  l.q_w = xavier(rng, prefix + ".q_w", d, d);
  l.q_b = zeros(prefix + ".q_b", 1, d);
  l.k_w = xavier(rng, prefix + ".k_w", d, d);
  l.k_b = zeros(prefix + ".k_b", 1, d);
  l.v_w = xavier(rng, prefix + ".v_w", d, d);
  l.v_b = zeros(prefix + ".v_b", 1, d);
  l.o_w = xavier(rng, prefix + ".o_w", d, d);
  l.o_b = zeros(prefix + ".o_b", 1, d);
  l.ln1_gain = ones(prefix + ".ln1_gain", 1, d);
  l.ln1_bias = zeros(prefix + ".ln1_bias", 1, d);
  l.ff1_w = xavier(rng, prefix + ".ff1_w", d, ff);
  l.ff1_b = zeros(prefix + ".ff1_b", 1, ff);
  l.ff2_w = xavier(rng, prefix + ".ff2_w", ff, d);
  l.ff2_b = zeros(prefix + ".ff2_b", 1, d);
  l.ln2_gain = ones(prefix + ".ln2_gain", 1, d);
  l.ln2_bias = zeros(prefix + ".ln2_bias", 1, d);
  return l;
}

PoolingWeights make_pool(Rng& rng, const std::string& prefix, int d, int heads) {
  PoolingWeights p;
  p.score_w = xavier(rng, prefix + ".score_w", d, heads);
  p.score_b = zeros(prefix + ".score_b", 1, heads);
  p.value_w = xavier(rng, prefix + ".value_w", d, d);
  p.value_b = zeros(prefix + ".value_b", 1, d);
  p.out_w = xavier(rng, prefix + ".out_w", d, d);
  p.out_b = zeros(prefix + ".out_b", 1, d);
  return p;
}

template <typename Layer, typename Out>
void collect_layer(Layer& l, Out& out) {
  for (auto* p : {&l.q_w, &l.q_b, &l.k_w, &l.k_b, &l.v_w, &l.v_b, &l.o_w, &l.o_b,
                  &l.ln1_gain, &l.ln1_bias, &l.ff1_w, &l.ff1_b, &l.ff2_w, &l.ff2_b,
                  &l.ln2_gain, &l.ln2_bias}) {
    out.push_back(p);
  }
}

template <typename Pool, typename Out>
void collect_pool(Pool& p, Out& out) {
  for (auto* q : {&p.score_w, &p.score_b, &p.value_w, &p.value_b, &p.out_w, &p.out_b}) {
    out.push_back(q);
  }
}

template <typename W, typename Out>
void collect(W& w, Out& out) {
  out.push_back(&w.token_embedding);
  for (auto& l : w.paragraph_layers) collect_layer(l, out);
  collect_pool(w.paragraph_pool, out);
  out.push_back(&w.type_embedding);
  for (auto& l : w.document_layers) collect_layer(l, out);
  collect_pool(w.document_pool, out);
}

}  // namespace

EncoderWeights EncoderWeights::initialize(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int d = config.d_model;
  const int ff = d * config.ffn_multiplier;
  EncoderWeights w;
  w.config = config;
  w.token_embedding = make_param("token_embedding",
                                 uniform_matrix(rng, config.vocab_buckets, d, std::sqrt(3.0)));
  for (int i = 0; i < config.n_layers_paragraph; ++i) {
    w.paragraph_layers.push_back(make_layer(rng, "paragraph.layer" + std::to_string(i), d, ff));
  }
  w.paragraph_pool = make_pool(rng, "paragraph.pool", d, config.n_heads);
  w.type_embedding = make_param("type_embedding", uniform_matrix(rng, 3, d, std::sqrt(3.0)));
  for (int i = 0; i < config.n_layers_document; ++i) {
    w.document_layers.push_back(make_layer(rng, "document.layer" + std::to_string(i), d, ff));
  }
  w.document_pool = make_pool(rng, "document.pool", d, config.n_heads);
  return w;
}

std::vector<Parameter*> EncoderWeights::parameters() {
  std::vector<Parameter*> out;
  collect(*this, out);
  return out;
}

std::vector<const Parameter*> EncoderWeights::parameters() const {
  std::vector<const Parameter*> out;
  collect(*this, out);
  return out;
}

void EncoderWeights::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

std::size_t EncoderWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

bool operator==(const EncoderWeights& a, const EncoderWeights& b) {
  if (!(a.config == b.config)) return false;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->name != pb[i]->name || pa[i]->value.rows() != pb[i]->value.rows() ||
        pa[i]->value.cols() != pb[i]->value.cols() || pa[i]->value != pb[i]->value) {
      return false;
    }
  }
  return true;
}

DocumentInput make_document(const DocumentText& text, const EncoderConfig& config) {
  return DocumentInput{
      ParagraphInput{tokenize(text.title, config), ParagraphType::kTitle},
      ParagraphInput{tokenize(text.abstract_text, config), ParagraphType::kAbstract},
      ParagraphInput{tokenize(text.context, config), ParagraphType::kContext},
  };
}

Matrix positional_encoding(int n, int d) {
  Matrix pe(n, d);
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

namespace {

template <typename Layer>
Var transformer_layer(Tape& t, Var x, Layer& l, int heads) {
  auto linear = [&t](Var in, auto& w, auto& b) { return add_row(matmul(in, t.param(w)), t.param(b)); };
  const Var q = linear(x, l.q_w, l.q_b);
  const Var k = linear(x, l.k_w, l.k_b);
  const Var v = linear(x, l.v_w, l.v_b);
  const auto d = x.cols();
  const auto dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_out;
  head_out.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    const Var attn = softmax_rows(scale(matmul_transposed(qh, kh), inv_sqrt));
    head_out.push_back(matmul(attn, vh));
  }
  const Var mixed = linear(heads == 1 ? head_out.front() : concat_cols(head_out), l.o_w, l.o_b);
  const Var h1 = layer_norm_rows(add(x, mixed), t.param(l.ln1_gain), t.param(l.ln1_bias));
  const Var ff = linear(relu(linear(h1, l.ff1_w, l.ff1_b)), l.ff2_w, l.ff2_b);
  return layer_norm_rows(add(h1, ff), t.param(l.ln2_gain), t.param(l.ln2_bias));
}

template <typename Pool>
Var pool_tokens(Tape& t, Var x, Pool& p) {
  const Var scores = add_row(matmul(x, t.param(p.score_w)), t.param(p.score_b));
  const Var weights = softmax_cols(scores);
  const Var values = add_row(matmul(x, t.param(p.value_w)), t.param(p.value_b));
  const Var pooled = head_pool(weights, values);
  return add_row(matmul(relu(pooled), t.param(p.out_w)), t.param(p.out_b));
}

template <typename W>
Var encode_paragraph_impl(Tape& t, const ParagraphInput& paragraph, W& w) {
  if (paragraph.tokens.empty()) throw std::invalid_argument("paragraph has no tokens");
  const auto& config = w.config;
  std::vector<int> tokens = paragraph.tokens;
  // Without positions the encoder is a function of the token multiset; a
  // canonical order makes its output bit-identical across permutations.
  if (!config.positional_encoding) std::sort(tokens.begin(), tokens.end());
  Var x = t.gather_rows(w.token_embedding, tokens);
  if (config.positional_encoding) {
    x = add(x, t.constant(positional_encoding(static_cast<int>(tokens.size()), config.d_model)));
  }
  for (auto& layer : w.paragraph_layers) x = transformer_layer(t, x, layer, config.n_heads);
  return pool_tokens(t, x, w.paragraph_pool);
}

template <typename W>
Var encode_document_impl(Tape& t, const DocumentInput& doc, W& w) {
  const std::array<const ParagraphInput*, 3> parts = {&doc.title, &doc.abstract_text, &doc.context};
  std::vector<Var> rows;
  std::vector<int> types;
  for (const auto* p : parts) {
    rows.push_back(encode_paragraph_impl(t, *p, w));
    types.push_back(static_cast<int>(p->type));
  }
  Var x = add(concat_rows(rows), t.gather_rows(w.type_embedding, types));
  for (auto& layer : w.document_layers) x = transformer_layer(t, x, layer, w.config.n_heads);
  return l2_normalize(pool_tokens(t, x, w.document_pool));
}

}  // namespace

PoolingResult multi_head_pool(const Matrix& x, const PoolingWeights& weights, int n_heads) {
  if (x.rows() == 0) throw std::invalid_argument("multi_head_pool: empty input");
  Tape t(false);
  const Var input = t.constant(x);
  const Var scores = add_row(matmul(input, t.param(weights.score_w)), t.param(weights.score_b));
  const Var attention = softmax_cols(scores);
  const Var values = add_row(matmul(input, t.param(weights.value_w)), t.param(weights.value_b));
  if (attention.cols() != n_heads) throw std::invalid_argument("score map width must equal n_heads");
  const Var out = add_row(matmul(relu(head_pool(attention, values)), t.param(weights.out_w)),
                          t.param(weights.out_b));
  return PoolingResult{attention.value(), out.value()};
}

Eigen::RowVectorXd embed_paragraph(const ParagraphInput& paragraph, const EncoderWeights& weights) {
  Tape t(false);
  return encode_paragraph_impl(t, paragraph, weights).value().row(0);
}

Eigen::RowVectorXd embed_document(const DocumentInput& document, const EncoderWeights& weights) {
  Tape t(false);
  return encode_document_impl(t, document, weights).value().row(0);
}

Var encode_paragraph(Tape& tape, const ParagraphInput& paragraph, EncoderWeights& weights) {
  return encode_paragraph_impl(tape, paragraph, weights);
}

Var encode_document(Tape& tape, const DocumentInput& document, EncoderWeights& weights) {
  return encode_document_impl(tape, document, weights);
}

double triplet_loss(double cos_positive, double cos_negative, double margin) {
  return std::max(0.0, margin - cos_positive + cos_negative);
}

namespace {

Var triplet_var(Var anchor, Var positive, Var negative, double margin) {
  return hinge(add_scalar(add(scale(dot(anchor, positive), -1.0), dot(anchor, negative)), margin));
}

}  // namespace

double triplet_loss_and_grad(EncoderWeights& weights, const DocumentInput& anchor,
                             const DocumentInput& positive, const DocumentInput& negative,
                             double margin) {
  weights.zero_grad();
  Tape t;
  const Var a = encode_document(t, anchor, weights);
  const Var p = encode_document(t, positive, weights);
  const Var n = encode_document(t, negative, weights);
  const Var loss = triplet_var(a, p, n, margin);
  t.backward(loss);
  return loss.value()(0, 0);
}

DocumentText query_document(const Corpus& corpus, const CitationQuery& query) {
  const auto* citing = corpus.find(query.citing_id);
  if (citing == nullptr) throw CorpusError("unknown citing paper " + query.citing_id);
  return DocumentText{citing->title, citing->abstract_text, query.context};
}

DocumentText candidate_document(const PaperRecord& paper) {
  return DocumentText{paper.title, paper.abstract_text, std::string()};
}

namespace {

struct Example {
  DocumentInput anchor;
  std::size_t positive;  // index into the candidate table
  std::size_t citing;    // candidate index of the citing paper, or npos
};

// Negatives are other in-batch golds; when the whole batch shares one gold, a
// random corpus paper is used instead.
std::vector<std::size_t> sample_negatives(Rng& rng, std::span<const std::size_t> batch,
                                          std::span<const Example> examples,
                                          std::size_t candidate_count) {
  std::vector<std::size_t> negatives;
  negatives.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = examples[batch[i]];
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto other = examples[batch[j]].positive;
      if (other != ex.positive && other != ex.citing) pool.push_back(other);
    }
    if (!pool.empty()) {
      negatives.push_back(pool[rng.below(pool.size())]);
      continue;
    }
    std::size_t pick = ex.positive;
    while (pick == ex.positive || pick == ex.citing) pick = rng.below(candidate_count);
    negatives.push_back(pick);
  }
  return negatives;
}

// Loss of one batch; when `update` is set, applies one SGD step.
double run_batch(EncoderWeights& w, std::span<const std::size_t> batch,
                 std::span<const std::size_t> negatives, std::span<const Example> examples,
                 std::span<const DocumentInput> candidates, const EncoderTrainOptions& options,
                 bool update) {
  Tape t(update);
  std::vector<std::pair<std::size_t, Var>> encoded;
  auto candidate = [&](std::size_t c) {
    for (const auto& [id, var] : encoded) {
      if (id == c) return var;
    }
    const Var v = encode_document(t, candidates[c], w);
    encoded.emplace_back(c, v);
    return v;
  };
  std::vector<Var> losses;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = examples[batch[i]];
    const Var a = encode_document(t, ex.anchor, w);
    losses.push_back(triplet_var(a, candidate(ex.positive), candidate(negatives[i]), options.margin));
  }
  const Var loss = mean(losses);
  if (update) {
    w.zero_grad();
    t.backward(loss);
    for (auto* p : w.parameters()) {
      if (p->grad.size() != 0) p->value -= options.learning_rate * p->grad;
    }
  }
  return loss.value()(0, 0) * static_cast<double>(batch.size());
}

}  // namespace

EncoderTrainResult train_encoder(const Corpus& corpus, std::span<const CitationQuery> queries,
                                 EncoderWeights initial, const EncoderTrainOptions& options) {
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  const auto& config = initial.config;
  std::vector<DocumentInput> candidates;
  std::map<PaperId, std::size_t> candidate_index;
  for (const auto& [id, paper] : corpus.papers) {
    candidate_index.emplace(id, candidates.size());
    candidates.push_back(make_document(candidate_document(paper), config));
  }
  std::vector<Example> examples;
  for (const auto& query : queries) {
    auto gold = candidate_index.find(query.gold_id);
    if (gold == candidate_index.end()) continue;
    auto citing = candidate_index.find(query.citing_id);
    examples.push_back(Example{make_document(query_document(corpus, query), config), gold->second,
                               citing == candidate_index.end() ? std::size_t(-1) : citing->second});
  }
  if (examples.empty()) throw std::invalid_argument("encoder training set is empty");
  if (candidates.size() < 2) throw std::invalid_argument("need at least two papers to sample negatives");

  EncoderTrainResult result{std::move(initial), 0.0, {}};
  if (options.epochs <= 0) return result;

  Rng rng(options.seed);
  std::vector<std::size_t> order(examples.size());
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span(order));
    std::vector<std::vector<std::size_t>> negatives;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const auto batch = std::span(order).subspan(start, std::min(options.batch_size, order.size() - start));
      negatives.push_back(sample_negatives(rng, batch, examples, candidates.size()));
    }
    if (epoch == 0) {
      double total = 0.0;
      for (std::size_t b = 0, start = 0; start < order.size(); start += options.batch_size, ++b) {
        const auto batch = std::span(order).subspan(start, std::min(options.batch_size, order.size() - start));
        total += run_batch(result.weights, batch, negatives[b], examples, candidates, options, false);
      }
      result.initial_loss = total / static_cast<double>(examples.size());
    }
    double total = 0.0;
    for (std::size_t b = 0, start = 0; start < order.size(); start += options.batch_size, ++b) {
      const auto batch = std::span(order).subspan(start, std::min(options.batch_size, order.size() - start));
      total += run_batch(result.weights, batch, negatives[b], examples, candidates, options, true);
    }
    result.epoch_losses.push_back(total / static_cast<double>(examples.size()));
  }
  for (auto* p : result.weights.parameters()) {
    p->value = p->value.unaryExpr([](double v) { return round_to_float(v); });
    p->grad = Matrix();
  }
  return result;
}

void append_encoder(const EncoderWeights& weights, Manifest& manifest, Bytes& payload) {
  const auto& c = weights.config;
  manifest.set("encoder.d_model", c.d_model);
  manifest.set("encoder.n_heads", c.n_heads);
  manifest.set("encoder.n_layers_paragraph", c.n_layers_paragraph);
  manifest.set("encoder.n_layers_document", c.n_layers_document);
  manifest.set("encoder.vocab_buckets", c.vocab_buckets);
  manifest.set("encoder.max_tokens", c.max_tokens);
  manifest.set("encoder.ffn_multiplier", c.ffn_multiplier);
  manifest.set("encoder.seed", std::to_string(c.seed));
  manifest.set("encoder.positional_encoding", c.positional_encoding ? "on" : "off");
  const auto params = weights.parameters();
  manifest.set("encoder.tensor_count", static_cast<std::int64_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* p = params[i];
    manifest.set("encoder.tensor." + std::to_string(1000 + i).substr(1),
                 p->name + ":" + std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols()));
    std::vector<float> data(static_cast<std::size_t>(p->value.size()));
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<float>(p->value.data()[k]);
    append_f32le(payload, data);
  }
}

EncoderWeights read_encoder(const Manifest& manifest, std::span<const std::byte> payload) {
  EncoderConfig c;
  c.d_model = static_cast<int>(manifest.require_int("encoder.d_model"));
  c.n_heads = static_cast<int>(manifest.require_int("encoder.n_heads"));
  c.n_layers_paragraph = static_cast<int>(manifest.require_int("encoder.n_layers_paragraph"));
  c.n_layers_document = static_cast<int>(manifest.require_int("encoder.n_layers_document"));
  c.vocab_buckets = static_cast<int>(manifest.require_int("encoder.vocab_buckets"));
  c.max_tokens = static_cast<int>(manifest.require_int("encoder.max_tokens"));
  c.ffn_multiplier = static_cast<int>(manifest.require_int("encoder.ffn_multiplier"));
  c.seed = std::stoull(manifest.require("encoder.seed"));
  c.positional_encoding = manifest.require("encoder.positional_encoding") == "on";
  c.validate();

  auto weights = EncoderWeights::initialize(c);
  const auto params = weights.parameters();
  if (manifest.require_int("encoder.tensor_count") != static_cast<std::int64_t>(params.size())) {
    throw FormatError("encoder tensor count does not match configuration");
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    const auto expected = p->name + ":" + std::to_string(p->value.rows()) + "x" + std::to_string(p->value.cols());
    if (manifest.require("encoder.tensor." + std::to_string(1000 + i).substr(1)) != expected) {
      throw FormatError("encoder tensor " + std::to_string(i) + " shape mismatch, expected " + expected);
    }
    const auto bytes = static_cast<std::size_t>(p->value.size()) * 4;
    if (offset + bytes > payload.size()) throw ChecksumError("encoder payload truncated");
    const auto data = decode_f32le(payload.subspan(offset, bytes));
    for (std::size_t k = 0; k < data.size(); ++k) p->value.data()[k] = data[k];
    offset += bytes;
  }
  if (offset != payload.size()) throw FormatError("encoder payload has trailing bytes");
  return weights;
}

void save_encoder(const EncoderWeights& weights, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  Bytes payload;
  append_encoder(weights, manifest, payload);
  manifest.set("format", "citerec-encoder");
  manifest.set("format_version", kFormatVersion);
  manifest.set("weights.bin.crc32", crc32_hex(payload));
  write_bytes(dir / "weights.bin", payload);
  manifest.write(dir / "manifest.txt");
}

EncoderWeights load_encoder(const std::filesystem::path& dir) {
  const auto manifest = Manifest::read(dir / "manifest.txt");
  if (manifest.require("format") != "citerec-encoder") throw FormatError("not an encoder directory");
  if (manifest.require_int("format_version") != kFormatVersion) {
    throw VersionMismatchError("unsupported encoder format version " + manifest.require("format_version"));
  }
  const auto payload = read_checked(dir, manifest, "weights.bin");
  return read_encoder(manifest, payload);
}

std::string fingerprint(const EncoderWeights& weights) {
  Manifest manifest;
  Bytes payload;
  append_encoder(weights, manifest, payload);
  const auto text = manifest.serialize();
  Bytes all(reinterpret_cast<const std::byte*>(text.data()),
            reinterpret_cast<const std::byte*>(text.data()) + text.size());
  all.insert(all.end(), payload.begin(), payload.end());
  return crc32_hex(all);
}

}  // namespace citerec
