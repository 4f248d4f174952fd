#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "citerec/corpus.hpp"

namespace citerec {

using NodeId = std::uint32_t;

/// Directed citation network. Papers occupy node ids [0, paper_count()) in
/// ascending id order; reference targets outside the corpus ("dangling")
/// follow. Dangling nodes have no outgoing edges but still count toward the
/// reference-set sizes of the papers that cite them.
class CitationGraph {
 public:
  CitationGraph() = default;

  static CitationGraph build(const Corpus& corpus, const WarningSink& warn = {});

  /// Reassembles a graph from persisted adjacency. `refs[i]` must be sorted
  /// and free of self-loops.
  static CitationGraph from_adjacency(std::vector<std::string> ids,
                                      std::size_t paper_count,
                                      std::vector<std::vector<NodeId>> refs);

  std::size_t paper_count() const { return paper_count_; }
  std::size_t node_count() const { return ids_.size(); }
  bool is_paper(NodeId n) const { return n < paper_count_; }

  std::optional<NodeId> find(std::string_view id) const;
  const std::string& id(NodeId n) const { return ids_[n]; }
  const std::vector<std::string>& ids() const { return ids_; }

  std::span<const NodeId> refs(NodeId n) const { return refs_[n]; }
  std::span<const NodeId> citers(NodeId n) const { return citers_[n]; }

  IdSet refs_of(std::string_view id) const;
  IdSet citers_of(std::string_view id) const;

  friend bool operator==(const CitationGraph& a, const CitationGraph& b) {
    return a.paper_count_ == b.paper_count_ && a.ids_ == b.ids_ && a.refs_ == b.refs_;
  }

 private:
  void index_and_transpose();

  std::size_t paper_count_ = 0;
  std::vector<std::string> ids_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::vector<NodeId>> refs_;
  std::vector<std::vector<NodeId>> citers_;
};

enum class CfAlgorithm { kScCF, kCsCF, kBlended };

struct CfScores {
  CfAlgorithm algorithm = CfAlgorithm::kScCF;
  /// Candidates with a positive score (blends may carry zeros for
  /// candidates present on only one side). Profile members never appear.
  std::map<PaperId, double> scores;

  double at(const PaperId& id) const {
    auto it = scores.find(id);
    return it == scores.end() ? 0.0 : it->second;
  }
};

/// Edges of `exclude` (typically the query's own citing paper) are ignored,
/// as if the paper were absent from the graph. Pass an empty view to use the
/// full graph.
///
/// Citing-side CF: a paper A whose references overlap the profile votes for
/// each of its references with weight |refs(A) n P| / sqrt(|refs(A)| |P|).
CfScores sccf_scores(const IdSet& profile, const CitationGraph& graph,
                     std::string_view exclude = {});

/// Cited-side CF: candidate e gains sum over x in P of the co-citation cosine
/// |citers(x) n citers(e)| / sqrt(|citers(x)| |citers(e)|).
CfScores cscf_scores(const IdSet& profile, const CitationGraph& graph,
                     std::string_view exclude = {});

/// alpha * norm(sccf) + (1 - alpha) * norm(cscf) over the union of
/// candidates, where norm divides by the per-query maximum (min-max with the
/// zero floor every unscored candidate sits at). Throws std::invalid_argument
/// for alpha outside [0, 1].
CfScores cf_blend(const CfScores& sccf, const CfScores& cscf, double alpha);

}  // namespace citerec
