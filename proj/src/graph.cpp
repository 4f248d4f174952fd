#include "citerec/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace citerec {

CitationGraph CitationGraph::build(const Corpus& corpus, const WarningSink& warn) {
  CitationGraph graph;
  graph.paper_count_ = corpus.papers.size();
  for (const auto& [id, paper] : corpus.papers) graph.ids_.push_back(id);

  IdSet dangling;
  for (const auto& [id, paper] : corpus.papers) {
    for (const auto& ref : paper.references) {
      if (!corpus.papers.contains(ref)) dangling.insert(ref);
    }
  }
  graph.ids_.insert(graph.ids_.end(), dangling.begin(), dangling.end());
  for (NodeId n = 0; n < graph.ids_.size(); ++n) graph.index_.emplace(graph.ids_[n], n);

  graph.refs_.resize(graph.ids_.size());
  NodeId n = 0;
  for (const auto& [id, paper] : corpus.papers) {
    auto& out = graph.refs_[n];
    for (const auto& ref : paper.references) {
      if (ref == id) {
        if (warn) warn("self-citation on " + id + " dropped");
        continue;
      }
      out.push_back(graph.index_.at(ref));
    }
    std::sort(out.begin(), out.end());
    ++n;
  }
  graph.index_and_transpose();
  return graph;
}

CitationGraph CitationGraph::from_adjacency(std::vector<std::string> ids,
                                            std::size_t paper_count,
                                            std::vector<std::vector<NodeId>> refs) {
  if (paper_count > ids.size() || refs.size() != ids.size()) {
    throw std::invalid_argument("adjacency shape does not match id table");
  }
  CitationGraph graph;
  graph.paper_count_ = paper_count;
  graph.ids_ = std::move(ids);
  graph.refs_ = std::move(refs);
  for (NodeId n = 0; n < graph.ids_.size(); ++n) {
    if (!graph.index_.emplace(graph.ids_[n], n).second) {
      throw std::invalid_argument("duplicate node id " + graph.ids_[n]);
    }
    const auto& out = graph.refs_[n];
    if (!std::is_sorted(out.begin(), out.end()) ||
        std::adjacent_find(out.begin(), out.end()) != out.end()) {
      throw std::invalid_argument("adjacency of " + graph.ids_[n] + " is not a sorted set");
    }
    for (NodeId target : out) {
      if (target >= graph.ids_.size() || target == n) {
        throw std::invalid_argument("bad edge from " + graph.ids_[n]);
      }
    }
  }
  graph.index_and_transpose();
  return graph;
}

void CitationGraph::index_and_transpose() {
  citers_.assign(ids_.size(), {});
  // Sources are visited in ascending order, so every citer list comes out sorted.
  for (NodeId source = 0; source < refs_.size(); ++source) {
    for (NodeId target : refs_[source]) citers_[target].push_back(source);
  }
}

std::optional<NodeId> CitationGraph::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

IdSet CitationGraph::refs_of(std::string_view id) const {
  IdSet out;
  if (auto n = find(id)) {
    for (NodeId r : refs_[*n]) out.insert(ids_[r]);
  }
  return out;
}

IdSet CitationGraph::citers_of(std::string_view id) const {
  IdSet out;
  if (auto n = find(id)) {
    for (NodeId c : citers_[*n]) out.insert(ids_[c]);
  }
  return out;
}

namespace {

struct ProfileNodes {
  std::vector<NodeId> nodes;  // members present in the graph, ascending
  std::vector<char> member;   // indexed by NodeId
};

ProfileNodes resolve_profile(const IdSet& profile, const CitationGraph& graph) {
  ProfileNodes out;
  out.member.assign(graph.node_count(), 0);
  for (const auto& id : profile) {
    if (auto n = graph.find(id)) {
      out.nodes.push_back(*n);
      out.member[*n] = 1;
    }
  }
  std::sort(out.nodes.begin(), out.nodes.end());
  return out;
}

std::optional<NodeId> excluded_node(const CitationGraph& graph, std::string_view exclude) {
  if (exclude.empty()) return std::nullopt;
  return graph.find(exclude);
}

std::size_t citer_count(const CitationGraph& graph, NodeId n, std::optional<NodeId> skip) {
  auto citers = graph.citers(n);
  std::size_t count = citers.size();
  if (skip && std::binary_search(citers.begin(), citers.end(), *skip)) --count;
  return count;
}

}  // namespace

CfScores sccf_scores(const IdSet& profile, const CitationGraph& graph,
                     std::string_view exclude) {
  CfScores out;
  out.algorithm = CfAlgorithm::kScCF;
  if (profile.empty()) return out;
  const auto resolved = resolve_profile(profile, graph);
  const auto skip = excluded_node(graph, exclude);

  // overlap[A] = |refs(A) n P|, gathered through the citers of each profile member.
  std::vector<std::uint32_t> overlap(graph.node_count(), 0);
  std::vector<NodeId> voters;
  for (NodeId x : resolved.nodes) {
    for (NodeId a : graph.citers(x)) {
      if (skip && a == *skip) continue;
      if (overlap[a]++ == 0) voters.push_back(a);
    }
  }
  std::sort(voters.begin(), voters.end());

  const double profile_size = static_cast<double>(profile.size());
  std::vector<double> score(graph.node_count(), 0.0);
  std::vector<char> touched(graph.node_count(), 0);
  for (NodeId a : voters) {
    const auto refs = graph.refs(a);
    const double sim = overlap[a] / std::sqrt(static_cast<double>(refs.size()) * profile_size);
    for (NodeId c : refs) {
      if (resolved.member[c]) continue;
      score[c] += sim;
      touched[c] = 1;
    }
  }
  for (NodeId c = 0; c < graph.node_count(); ++c) {
    if (touched[c]) out.scores.emplace(graph.id(c), score[c]);
  }
  return out;
}

CfScores cscf_scores(const IdSet& profile, const CitationGraph& graph,
                     std::string_view exclude) {
  CfScores out;
  out.algorithm = CfAlgorithm::kCsCF;
  if (profile.empty()) return out;
  const auto resolved = resolve_profile(profile, graph);
  const auto skip = excluded_node(graph, exclude);

  std::vector<double> score(graph.node_count(), 0.0);
  std::vector<char> touched(graph.node_count(), 0);
  std::vector<std::uint32_t> shared(graph.node_count(), 0);
  std::vector<NodeId> candidates;
  for (NodeId x : resolved.nodes) {
    const auto x_citers = citer_count(graph, x, skip);
    if (x_citers == 0) continue;
    candidates.clear();
    for (NodeId a : graph.citers(x)) {
      if (skip && a == *skip) continue;
      for (NodeId e : graph.refs(a)) {
        if (resolved.member[e]) continue;
        if (shared[e]++ == 0) candidates.push_back(e);
      }
    }
    std::sort(candidates.begin(), candidates.end());
    for (NodeId e : candidates) {
      const auto e_citers = citer_count(graph, e, skip);
      score[e] += shared[e] / std::sqrt(static_cast<double>(x_citers) *
                                        static_cast<double>(e_citers));
      touched[e] = 1;
      shared[e] = 0;
    }
  }
  for (NodeId e = 0; e < graph.node_count(); ++e) {
    if (touched[e]) out.scores.emplace(graph.id(e), score[e]);
  }
  return out;
}

namespace {

double max_score(const CfScores& s) {
  double m = 0.0;
  for (const auto& [id, v] : s.scores) m = std::max(m, v);
  return m;
}

}  // namespace

CfScores cf_blend(const CfScores& sccf, const CfScores& cscf, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1]");
  }
  CfScores out;
  out.algorithm = CfAlgorithm::kBlended;
  const double sc_max = max_score(sccf);
  const double cs_max = max_score(cscf);
  auto norm = [](double v, double m) { return m > 0.0 ? v / m : 0.0; };
  for (const auto& [id, v] : sccf.scores) out.scores[id] = alpha * norm(v, sc_max);
  for (const auto& [id, v] : cscf.scores) out.scores[id] += (1.0 - alpha) * norm(v, cs_max);
  return out;
}

}  // namespace citerec
