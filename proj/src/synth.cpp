#include "citerec/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "citerec/rng.hpp"

namespace citerec {

void SynthSpec::validate() const {
  if (n_papers == 0) throw std::invalid_argument("synth needs at least one paper");
  if (n_clusters == 0 || n_clusters > n_papers) throw std::invalid_argument("cluster count must be in [1, papers]");
  if (!(p_intra >= 0.0 && p_intra <= 1.0 && p_inter >= 0.0 && p_inter <= 1.0)) {
    throw std::invalid_argument("citation probabilities must be in [0, 1]");
  }
  if (!(p_intra > p_inter)) throw std::invalid_argument("intra-cluster probability must exceed inter-cluster");
  if (!(popularity_spread >= 0.0)) throw std::invalid_argument("popularity spread must be non-negative");
  if (words_per_cluster == 0 || topic_words_per_paper == 0 || topic_words_per_paper > words_per_cluster) {
    throw std::invalid_argument("topic words per paper must be in [1, words per cluster]");
  }
}

namespace {

constexpr std::array<const char*, 12> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v"};
constexpr std::array<const char*, 5> kVowels{"a", "e", "i", "o", "u"};

class WordMaker {
 public:
  explicit WordMaker(Rng& rng) : rng_(rng) {}

  std::string make(std::size_t syllables) {
    for (;;) {
      std::string w;
      for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng_.below(kOnsets.size())];
        w += kVowels[rng_.below(kVowels.size())];
      }
      w += kOnsets[rng_.below(kOnsets.size())];
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng& rng_;
  std::set<std::string> used_;
};

template <std::size_t N>
const char* pick(Rng& rng, const std::array<const char*, N>& words) {
  return words[rng.below(N)];
}

constexpr std::array<const char*, 8> kBackgroundCues{"studied",  "extensively", "introduced", "known",
                                                     "surveyed", "popular",     "attention",  "previously"};
constexpr std::array<const char*, 8> kMethodCues{"adopt",  "dataset",   "tools",  "employ",
                                                 "following", "implementation", "apply", "code"};
constexpr std::array<const char*, 8> kComparativeCues{"outperforms", "baseline", "margin",   "compared",
                                                      "contrast",    "better",   "improves", "against"};
constexpr std::array<const char*, 10> kFiller{"the", "of", "a", "we", "and", "by", "wide", "in", "this", "results"};

const std::array<const char*, 8>& cues_for(IntentLabel intent) {
  switch (intent) {
    case IntentLabel::kMethod:
      return kMethodCues;
    case IntentLabel::kComparative:
      return kComparativeCues;
    case IntentLabel::kBackground:
      break;
  }
  return kBackgroundCues;
}

std::string cue_phrase(Rng& rng, IntentLabel intent, std::size_t cues, std::size_t filler) {
  std::vector<std::string> words;
  const auto& family = cues_for(intent);
  for (std::size_t i = 0; i < cues; ++i) words.emplace_back(pick(rng, family));
  for (std::size_t i = 0; i < filler; ++i) words.emplace_back(pick(rng, kFiller));
  rng.shuffle(std::span(words));
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

std::string paper_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%04zu", i);
  return buf;
}

}  // namespace

std::vector<LabeledSentence> generate_intent_corpus(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSentence> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto intent = kAllIntents[i % kIntentCount];
    out.push_back({cue_phrase(rng, intent, 2 + rng.below(2), 4 + rng.below(3)), intent});
  }
  return out;
}

SynthCorpus generate_synth(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  WordMaker words(rng);
  SynthCorpus out;

  std::vector<std::vector<std::string>> vocab(spec.n_clusters);
  for (auto& v : vocab) {
    for (std::size_t i = 0; i < spec.words_per_cluster; ++i) v.push_back(words.make(2));
  }

  const auto n = spec.n_papers;
  std::vector<std::string> signature(n);
  std::vector<std::vector<std::string>> topic(n);
  out.cluster_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i % spec.n_clusters;
    out.cluster_of[i] = c;
    signature[i] = words.make(3);
    std::vector<std::string> pool = vocab[c];
    rng.shuffle(std::span(pool));
    topic[i].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(spec.topic_words_per_paper));
  }

  std::vector<double> appeal(n);
  double appeal_sum = 0.0;
  for (auto& a : appeal) {
    a = std::exp(spec.popularity_spread * rng.normal());
    appeal_sum += a;
  }
  for (auto& a : appeal) a *= static_cast<double>(n) / appeal_sum;

  for (std::size_t i = 0; i < n; ++i) {
    PaperRecord p;
    p.id = paper_id(i);
    p.year = 2000 + static_cast<int>(i % 20);
    p.title = signature[i] + " " + topic[i][0] + " " + topic[i][1];
    std::string abstract = "we study " + signature[i];
    for (const auto& w : topic[i]) abstract += " " + w;
    const auto& cluster_words = vocab[out.cluster_of[i]];
    for (int k = 0; k < 4; ++k) abstract += " " + cluster_words[rng.below(cluster_words.size())];
    p.abstract_text = abstract + ".";
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double prob = out.cluster_of[i] == out.cluster_of[j] ? spec.p_intra : spec.p_inter;
      if (rng.bernoulli(std::min(1.0, prob * appeal[j]))) p.references.insert(paper_id(j));
    }
    out.papers.push_back(std::move(p));
  }

  std::vector<std::vector<std::size_t>> members(spec.n_clusters);
  for (std::size_t i = 0; i < n; ++i) members[out.cluster_of[i]].push_back(i);

  std::size_t query_counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::size_t> refs;
    for (const auto& r : out.papers[i].references) refs.push_back(std::stoul(r.substr(1)));
    rng.shuffle(std::span(refs));
    const auto take = std::min(refs.size(), spec.contexts_per_paper);
    for (std::size_t q = 0; q < take; ++q) {
      const auto gold = refs[q];
      const auto intent = kAllIntents[rng.below(kIntentCount)];
      std::string mention;
      auto name = [&](std::size_t paper) {
        mention += " " + topic[paper][1] + " " + signature[paper] + " " + topic[paper][2] + " " + topic[paper][0];
      };
      const auto& same = members[out.cluster_of[gold]];
      if (intent == IntentLabel::kBackground && same.size() > spec.background_mentions + 2) {
        std::set<std::size_t> chosen;
        while (chosen.size() < spec.background_mentions) {
          const auto other = same[rng.below(same.size())];
          if (other != gold && other != i && chosen.insert(other).second) name(other);
        }
      } else {
        name(gold);
      }
      std::string context = cue_phrase(rng, intent, 2, 2) + mention + " " + std::string(kCitationSlot);
      ContextRecord rec;
      char qid[48];
      std::snprintf(qid, sizeof qid, "Q%05zu", query_counter++);
      rec.query_id = qid;
      rec.citing_id = out.papers[i].id;
      rec.cited_id = out.papers[gold].id;
      rec.context = std::move(context);
      rec.intent = intent;
      out.contexts.push_back(std::move(rec));
    }
  }

  out.intent_sentences = generate_intent_corpus(spec.intent_sentences, spec.seed + 1);
  return out;
}

SynthFiles write_synth(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles files{dir / "papers.jsonl", dir / "contexts.jsonl", dir / "intents.jsonl"};
  auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(files.papers);
    for (const auto& p : corpus.papers) out << to_json_line(p) << '\n';
  }
  {
    auto out = open(files.contexts);
    for (const auto& c : corpus.contexts) out << to_json_line(c) << '\n';
  }
  {
    auto out = open(files.intents);
    for (const auto& s : corpus.intent_sentences) out << to_json_line(s) << '\n';
  }
  return files;
}

Corpus to_corpus(const SynthCorpus& synth) {
  Corpus corpus;
  for (const auto& p : synth.papers) corpus.papers.emplace(p.id, p);
  corpus.queries = build_queries(corpus, synth.contexts).queries;
  return corpus;
}

}  // namespace citerec
