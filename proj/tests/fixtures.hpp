#pragma once

#include "citerec/retrieval.hpp"
#include "citerec/synth.hpp"

namespace citerec::testing {

inline EncoderConfig small_encoder_config() {
  EncoderConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.vocab_buckets = 512;
  c.max_tokens = 32;
  c.seed = 3;
  return c;
}

inline SynthSpec small_spec(std::uint64_t seed = 42) {
  SynthSpec spec;
  spec.n_papers = 30;
  spec.p_intra = 0.25;
  spec.p_inter = 0.02;
  spec.intent_sentences = 30;
  spec.seed = seed;
  return spec;
}

/// Untrained encoder over a small synthetic corpus.
inline DocumentIndex small_index(std::uint64_t seed = 42) {
  return build_index(to_corpus(generate_synth(small_spec(seed))),
                     EncoderWeights::initialize(small_encoder_config()));
}

/// Queries matching small_index(seed).
inline std::vector<CitationQuery> small_queries(std::uint64_t seed = 42) {
  return to_corpus(generate_synth(small_spec(seed))).queries;
}

}  // namespace citerec::testing
