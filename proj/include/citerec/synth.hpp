#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "citerec/corpus.hpp"
#include "citerec/intent.hpp"

namespace citerec {

struct SynthSpec {
  std::size_t n_papers = 200;
  std::size_t n_clusters = 3;
  double p_intra = 0.08;
  double p_inter = 0.005;
  /// Log-scale spread of per-paper citation attractiveness; 0 gives every
  /// paper the same chance of being cited.
  double popularity_spread = 1.0;
  std::size_t words_per_cluster = 40;
  std::size_t topic_words_per_paper = 4;
  std::size_t contexts_per_paper = 2;
  /// Other same-cluster papers named by each background context.
  std::size_t background_mentions = 2;
  std::size_t intent_sentences = 300;
  std::uint64_t seed = 42;

  /// Throws std::invalid_argument for a degenerate spec.
  void validate() const;
};

struct SynthCorpus {
  std::vector<PaperRecord> papers;  // ascending id order
  std::vector<std::size_t> cluster_of;
  std::vector<ContextRecord> contexts;
  std::vector<LabeledSentence> intent_sentences;
};

/// Planted-partition corpus. Each paper carries a unique signature word and
/// a few words of its cluster's vocabulary. Method and comparative contexts
/// name the cited paper's signature and topic words; background contexts
/// name other papers from the same cluster instead.
SynthCorpus generate_synth(const SynthSpec& spec);

/// Cue-family sentences only (background / method / comparative).
std::vector<LabeledSentence> generate_intent_corpus(std::size_t count, std::uint64_t seed);

struct SynthFiles {
  std::filesystem::path papers;
  std::filesystem::path contexts;
  std::filesystem::path intents;
};

/// papers.jsonl, contexts.jsonl and intents.jsonl under `dir`.
SynthFiles write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir);

/// Corpus with queries built from the generated contexts.
Corpus to_corpus(const SynthCorpus& synth);

}  // namespace citerec
