#include "citerec/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <unordered_set>

namespace citerec {

RankedList RankedList::from_scores(std::vector<RankedEntry> entries, std::size_t limit) {
  std::unordered_set<std::string_view> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.id).second) throw std::invalid_argument("duplicate id in ranking: " + e.id);
  }
  RankedList list;
  const auto keep = std::min(limit, entries.size());
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep),
                    entries.end(), ranks_before);
  entries.resize(keep);
  list.entries_ = std::move(entries);
  return list;
}

RankedList RankedList::from_ordered(std::vector<RankedEntry> entries) {
  RankedList list;
  list.entries_ = std::move(entries);
  return list;
}

std::optional<std::size_t> RankedList::rank_of(const PaperId& id) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].id == id) return i + 1;
  }
  return std::nullopt;
}

bool RankedList::is_canonical() const {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!seen.insert(entries_[i].id).second) return false;
    if (i > 0 && !ranks_before(entries_[i - 1], entries_[i])) return false;
  }
  return true;
}

std::optional<std::size_t> DocumentIndex::row_of(const PaperId& id) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

bool operator==(const DocumentIndex& a, const DocumentIndex& b) {
  return a.corpus.papers == b.corpus.papers && a.ids == b.ids && a.dim == b.dim &&
         a.embeddings.size() == b.embeddings.size() &&
         std::equal(a.embeddings.begin(), a.embeddings.end(), b.embeddings.begin(),
                    [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); }) &&
         a.graph == b.graph && a.encoder == b.encoder;
}

DocumentIndex build_index(const Corpus& corpus, EncoderWeights encoder, const WarningSink& warn) {
  DocumentIndex index;
  index.corpus.papers = corpus.papers;
  index.dim = static_cast<std::size_t>(encoder.config.d_model);
  index.graph = CitationGraph::build(corpus, warn);
  index.embeddings.reserve(corpus.papers.size() * index.dim);
  for (const auto& [id, paper] : corpus.papers) {
    if (paper.abstract_text.empty() && warn) warn("paper " + id + " has an empty abstract");
    const auto doc = make_document(candidate_document(paper), encoder.config);
    const auto v = embed_document(doc, encoder);
    for (Eigen::Index i = 0; i < v.size(); ++i) index.embeddings.push_back(static_cast<float>(v(i)));
    index.ids.push_back(id);
  }
  index.encoder = std::move(encoder);
  return index;
}

namespace {

double cosine(std::span<const double> q, std::span<const float> row) {
  double dot = 0.0, qq = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double r = row[i];
    dot += q[i] * r;
    qq += q[i] * q[i];
    rr += r * r;
  }
  if (qq == 0.0 || rr == 0.0) return 0.0;
  return dot / std::sqrt(qq * rr);
}

}  // namespace

RankedList knn(std::span<const double> query, const DocumentIndex& index, std::size_t k,
               const WarningSink& warn) {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  if (query.size() != index.dim) throw std::invalid_argument("query dimension does not match index");
  if (k > index.ids.size() && warn) {
    warn("k=" + std::to_string(k) + " exceeds index size " + std::to_string(index.ids.size()));
  }
  std::vector<RankedEntry> entries;
  entries.reserve(index.ids.size());
  for (std::size_t r = 0; r < index.ids.size(); ++r) {
    entries.push_back({index.ids[r], cosine(query, index.row(r))});
  }
  return RankedList::from_scores(std::move(entries), k);
}

void FusionWeights::validate() const {
  if (!(encoder >= 0.0 && cf >= 0.0) || std::abs(encoder + cf - 1.0) > 1e-9) {
    throw std::invalid_argument("fusion weights must be non-negative and sum to 1");
  }
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = range > 0.0 ? (values[i] - *lo) / range : (values[i] > 0.0 ? 1.0 : 0.0);
  }
  return out;
}

Eigen::RowVectorXd embed_query(const CitationQuery& query, const DocumentIndex& index) {
  const auto doc = make_document(query_document(index.corpus, query), index.encoder.config);
  return embed_document(doc, index.encoder);
}

RecallBreakdown recall_breakdown(const CitationQuery& query, const DocumentIndex& index,
                                 const RecallOptions& options) {
  options.fusion.validate();
  RecallBreakdown out;
  std::vector<double> enc_raw;
  std::vector<double> cf_raw;

  const bool need_encoder = options.fusion.encoder > 0.0;
  const bool need_cf = options.fusion.cf > 0.0;
  Eigen::RowVectorXd q;
  if (need_encoder) q = embed_query(query, index);
  CfScores blended;
  if (need_cf) {
    const std::string_view hide = options.hide_citing_paper ? std::string_view(query.citing_id) : std::string_view();
    blended = cf_blend(sccf_scores(query.profile, index.graph, hide),
                       cscf_scores(query.profile, index.graph, hide), options.alpha);
  } else if (!(options.alpha >= 0.0 && options.alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }

  for (std::size_t r = 0; r < index.ids.size(); ++r) {
    const auto& id = index.ids[r];
    if (id == query.citing_id || query.profile.contains(id)) continue;
    out.pool.push_back(id);
    enc_raw.push_back(need_encoder ? cosine(std::span(q.data(), static_cast<std::size_t>(q.size())), index.row(r)) : 0.0);
    cf_raw.push_back(need_cf ? blended.at(id) : 0.0);
  }
  out.encoder = min_max_normalize(enc_raw);
  out.cf = min_max_normalize(cf_raw);
  out.fused.resize(out.pool.size());
  for (std::size_t i = 0; i < out.pool.size(); ++i) {
    out.fused[i] = options.fusion.encoder * out.encoder[i] + options.fusion.cf * out.cf[i];
  }
  return out;
}

RankedList recall(const CitationQuery& query, const DocumentIndex& index,
                  const RecallOptions& options) {
  if (options.k == 0) throw std::invalid_argument("k must be at least 1");
  auto parts = recall_breakdown(query, index, options);
  std::vector<RankedEntry> entries;
  entries.reserve(parts.pool.size());
  for (std::size_t i = 0; i < parts.pool.size(); ++i) {
    entries.push_back({std::move(parts.pool[i]), parts.fused[i]});
  }
  return RankedList::from_scores(std::move(entries), options.k);
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

std::vector<RankedList> recall_all(std::span<const CitationQuery> queries,
                                   const DocumentIndex& index, const RecallOptions& options,
                                   std::size_t threads) {
  std::vector<RankedList> out(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) { out[i] = recall(queries[i], index, options); });
  return out;
}

}  // namespace citerec
