#include "citerec/cli.hpp"

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "citerec/citeval.hpp"
#include "citerec/corpus.hpp"
#include "citerec/encoder.hpp"
#include "citerec/external_scorer.hpp"
#include "citerec/genprep.hpp"
#include "citerec/graph.hpp"
#include "citerec/index_store.hpp"
#include "citerec/intent.hpp"
#include "citerec/metrics.hpp"
#include "citerec/rerank.hpp"
#include "citerec/retrieval.hpp"
#include "citerec/synth.hpp"
#include "citerec/tensor_store.hpp"
#include "json.hpp"

namespace citerec::cli {

namespace {

using nlohmann::json;

struct Globals {
  std::size_t threads = 1;
  std::string format = "text";
  std::string split = "auto";
  std::string log_level = "info";
};

/// Shared state handed to every command.
struct Session {
  Globals globals;
  std::ostream* out = nullptr;
  std::shared_ptr<spdlog::logger> log;
  std::string command;
  std::string config_text;
  std::map<std::string, std::string> seeds;

  bool records() const { return globals.format == "records"; }

  WarningSink warn() const {
    return [log = log](std::string_view msg) { log->warn("{}", msg); };
  }

  QuerySplit split_or(QuerySplit fallback) const {
    if (globals.split == "all") return QuerySplit::kAll;
    if (globals.split == "train") return QuerySplit::kTrain;
    if (globals.split == "test") return QuerySplit::kTest;
    return fallback;
  }

  void header() const {
    std::ostringstream seeds_text;
    bool first = true;
    for (const auto& [k, v] : seeds) {
      seeds_text << (first ? "" : ",") << k << ':' << v;
      first = false;
    }
    const auto* data = reinterpret_cast<const std::byte*>(config_text.data());
    *out << "# citerec " << kVersion << " command=" << command
         << " config_crc32=" << crc32_hex(std::span(data, config_text.size()))
         << " seeds=" << (first ? "none" : seeds_text.str()) << " threads=" << globals.threads << '\n';
  }
};

std::vector<CitationQuery> load_queries(const Corpus& corpus, const std::string& contexts_path,
                                        const Session& s, QuerySplit fallback_split) {
  const auto contexts = load_contexts(contexts_path, s.warn());
  auto built = build_queries(corpus, contexts);
  if (built.dropped > 0) s.log->warn("{} context(s) dropped: gold paper not in corpus", built.dropped);
  auto selected = select_split(built.queries, s.split_or(fallback_split));
  s.log->info("{} of {} queries selected", selected.size(), built.queries.size());
  return selected;
}

std::optional<IntentModel> maybe_intent_model(const std::string& dir) {
  if (dir.empty()) return std::nullopt;
  return load_intent_model(dir);
}

RecallOptions recall_options(double w_encoder, double w_cf, double alpha, std::size_t k) {
  RecallOptions o;
  o.fusion = {w_encoder, w_cf};
  o.fusion.validate();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0, 1]");
  o.alpha = alpha;
  o.k = k;
  return o;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const auto v = std::stoull(item, &used);
    if (used != item.size() || v == 0) throw CLI::ValidationError("--k", "K values must be positive integers");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) throw CLI::ValidationError("--k", "empty K list");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

json ranked_json(const RankedList& list, std::size_t top) {
  json arr = json::array();
  for (std::size_t i = 0; i < std::min(top, list.size()); ++i) {
    arr.push_back({{"id", list[i].id}, {"score", list[i].score}});
  }
  return arr;
}

void print_ranked_text(std::ostream& out, const CitationQuery& q, const RankedList& list, std::size_t top) {
  const auto rank = list.rank_of(q.gold_id);
  out << q.query_id << " gold=" << q.gold_id << " rank=" << (rank ? std::to_string(*rank) : "miss");
  for (std::size_t i = 0; i < std::min(top, list.size()); ++i) out << ' ' << list[i].id << ':' << list[i].score;
  out << '\n';
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthSpec spec;
  std::string out;
};

void cmd_synth(Session& s, const SynthArgs& a) {
  const auto corpus = generate_synth(a.spec);
  const auto files = write_synth(corpus, a.out);
  s.header();
  std::size_t refs = 0;
  for (const auto& p : corpus.papers) refs += p.references.size();
  if (s.records()) {
    *s.out << json{{"papers", corpus.papers.size()}, {"references", refs}, {"contexts", corpus.contexts.size()},
                   {"intent_sentences", corpus.intent_sentences.size()}, {"papers_file", files.papers.string()},
                   {"contexts_file", files.contexts.string()}, {"intents_file", files.intents.string()}}
                  .dump()
           << '\n';
  } else {
    *s.out << "papers " << corpus.papers.size() << "\nreferences " << refs << "\ncontexts " << corpus.contexts.size()
           << "\nintent_sentences " << corpus.intent_sentences.size() << "\nwrote " << files.papers.string() << ", "
           << files.contexts.string() << ", " << files.intents.string() << '\n';
  }
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  std::string papers;
  std::string contexts;
  std::string out;
};

void cmd_ingest(Session& s, const IngestArgs& a) {
  auto corpus = load_papers(a.papers, s.warn());
  const auto report = validate(corpus);
  for (const auto& [from, to] : report.dangling) s.log->warn("{} cites unknown paper {}", from, to);
  std::size_t query_count = 0, dropped = 0;
  if (!a.contexts.empty()) {
    const auto contexts = load_contexts(a.contexts, s.warn());
    const auto built = build_queries(corpus, contexts);
    query_count = built.queries.size();
    dropped = built.dropped;
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    write_papers(out, corpus);
  }
  s.header();
  if (s.records()) {
    *s.out << json{{"papers", report.papers}, {"references", report.references},
                   {"dangling", report.dangling.size()}, {"queries", query_count}, {"dropped_contexts", dropped}}
                  .dump()
           << '\n';
  } else {
    *s.out << "papers " << report.papers << "\nreferences " << report.references << "\ndangling "
           << report.dangling.size() << "\nqueries " << query_count << "\ndropped_contexts " << dropped << '\n';
  }
}

// ---------------------------------------------------------------- train-encoder

struct TrainEncoderArgs {
  std::string papers;
  std::string contexts;
  std::string out;
  EncoderConfig config;
  EncoderTrainOptions options;
  bool no_positional = false;
};

void cmd_train_encoder(Session& s, TrainEncoderArgs a) {
  a.config.positional_encoding = !a.no_positional;
  a.config.validate();
  s.seeds["encoder_init"] = std::to_string(a.config.seed);
  s.seeds["encoder_train"] = std::to_string(a.options.seed);
  const auto corpus = load_papers(a.papers, s.warn());
  const auto queries = load_queries(corpus, a.contexts, s, QuerySplit::kTrain);
  const auto result = train_encoder(corpus, queries, EncoderWeights::initialize(a.config), a.options);
  save_encoder(result.weights, a.out);
  s.header();
  if (s.records()) {
    *s.out << json{{"initial_loss", result.initial_loss}, {"epoch_losses", result.epoch_losses},
                   {"queries", queries.size()}, {"fingerprint", fingerprint(result.weights)}}
                  .dump()
           << '\n';
  } else {
    *s.out << "queries " << queries.size() << "\ninitial_loss " << result.initial_loss << '\n';
    for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
      *s.out << "epoch " << e + 1 << " loss " << result.epoch_losses[e] << '\n';
    }
    *s.out << "fingerprint " << fingerprint(result.weights) << '\n';
  }
}

// ---------------------------------------------------------------- build-index

struct BuildIndexArgs {
  std::string papers;
  std::string encoder;
  std::string out;
};

void cmd_build_index(Session& s, const BuildIndexArgs& a) {
  const auto corpus = load_papers(a.papers, s.warn());
  const auto index = build_index(corpus, load_encoder(a.encoder), s.warn());
  save_index(index, a.out);
  s.header();
  if (s.records()) {
    *s.out << json{{"papers", index.ids.size()}, {"dim", index.dim}, {"out", a.out}}.dump() << '\n';
  } else {
    *s.out << "papers " << index.ids.size() << "\ndim " << index.dim << "\nwrote " << a.out << '\n';
  }
}

// ---------------------------------------------------------------- recall

struct FusionArgs {
  double w_encoder = 0.8;
  double w_cf = 0.2;
  double alpha = 0.5;
  std::size_t k = 2000;
};

void add_fusion_flags(CLI::App* app, FusionArgs& f, bool short_k = false) {
  app->add_option("--w1,--w-encoder", f.w_encoder, "Weight of the encoder score")->capture_default_str();
  app->add_option("--w2,--w-cf", f.w_cf, "Weight of the CF score")->capture_default_str();
  app->add_option("--alpha", f.alpha, "ScCF share of the CF blend")->capture_default_str();
  app->add_option(short_k ? "--k,--recall-k" : "--recall-k", f.k, "Recall list length")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

struct RecallArgs {
  std::string index;
  std::string contexts;
  std::string out;
  FusionArgs fusion;
  std::size_t top = 10;
};

void cmd_recall(Session& s, const RecallArgs& a) {
  const auto index = load_index(a.index);
  const auto queries = load_queries(index.corpus, a.contexts, s, QuerySplit::kTest);
  const auto options = recall_options(a.fusion.w_encoder, a.fusion.w_cf, a.fusion.alpha, a.fusion.k);
  const auto lists = recall_all(queries, index, options, s.globals.threads);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + a.out);
  }
  s.header();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto rank = lists[i].rank_of(queries[i].gold_id);
    if (file.is_open()) {
      file << json{{"query_id", queries[i].query_id}, {"gold_id", queries[i].gold_id},
                   {"gold_rank", rank ? json(*rank) : json(nullptr)}, {"candidates", ranked_json(lists[i], a.fusion.k)}}
                  .dump()
           << '\n';
    }
    if (s.records()) {
      *s.out << json{{"query_id", queries[i].query_id}, {"gold_id", queries[i].gold_id},
                     {"gold_rank", rank ? json(*rank) : json(nullptr)}, {"candidates", ranked_json(lists[i], a.top)}}
                    .dump()
             << '\n';
    } else {
      print_ranked_text(*s.out, queries[i], lists[i], a.top);
    }
  }
}

// ---------------------------------------------------------------- cf-dump

struct CfDumpArgs {
  std::string index;
  std::string citing;
  std::vector<std::string> profile;
  std::string algorithm = "blend";
  double alpha = 0.5;
  std::size_t top = 20;
};

void cmd_cf_dump(Session& s, const CfDumpArgs& a) {
  const auto index = load_index(a.index);
  IdSet profile(a.profile.begin(), a.profile.end());
  std::string exclude;
  if (!a.citing.empty()) {
    const auto* paper = index.corpus.find(a.citing);
    if (paper == nullptr) throw CorpusError("unknown citing paper " + a.citing);
    profile.insert(paper->references.begin(), paper->references.end());
    exclude = a.citing;
  }
  CfScores scores;
  if (a.algorithm == "sccf") {
    scores = sccf_scores(profile, index.graph, exclude);
  } else if (a.algorithm == "cscf") {
    scores = cscf_scores(profile, index.graph, exclude);
  } else {
    scores = cf_blend(sccf_scores(profile, index.graph, exclude), cscf_scores(profile, index.graph, exclude), a.alpha);
  }
  std::vector<RankedEntry> entries;
  for (const auto& [id, v] : scores.scores) entries.push_back({id, v});
  const auto ranked = RankedList::from_scores(std::move(entries), a.top);
  s.header();
  for (const auto& e : ranked) {
    if (s.records()) {
      *s.out << json{{"id", e.id}, {"score", e.score}}.dump() << '\n';
    } else {
      *s.out << e.id << ' ' << e.score << '\n';
    }
  }
}

// ---------------------------------------------------------------- rerank-train

struct RerankTrainArgs {
  std::string index;
  std::string contexts;
  std::string out;
  std::string intent_model;
  FusionArgs fusion;
  RerankTrainOptions options;
  bool no_intent = false;
  std::size_t depth = 100;
};

void cmd_rerank_train(Session& s, RerankTrainArgs a) {
  a.options.intent_block = !a.no_intent;
  s.seeds["rerank"] = std::to_string(a.options.seed);
  const auto index = load_index(a.index);
  const auto queries = load_queries(index.corpus, a.contexts, s, QuerySplit::kTrain);
  const auto intent_model = maybe_intent_model(a.intent_model);
  const auto options = recall_options(a.fusion.w_encoder, a.fusion.w_cf, a.fusion.alpha, a.fusion.k);
  const auto lists = recall_all(queries, index, options, s.globals.threads);
  std::vector<RerankGroup> groups;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto rq = rerank_query_for(queries[i], index.corpus, intent_model ? &*intent_model : nullptr);
    if (auto g = make_rerank_group(rq, queries[i], lists[i], index.corpus, a.depth)) groups.push_back(std::move(*g));
  }
  const auto result = train_reranker(groups, a.options);
  save_rerank_model(result.model, a.out);
  s.header();
  if (s.records()) {
    *s.out << json{{"groups", groups.size()}, {"initial_bce", result.initial_bce},
                   {"final_bce", result.epoch_bce.empty() ? result.initial_bce : result.epoch_bce.back()},
                   {"weights", result.model.weights}, {"bias", result.model.bias},
                   {"intent_block", result.model.intent_block}}
                  .dump()
           << '\n';
  } else {
    *s.out << "groups " << groups.size() << "\ninitial_bce " << result.initial_bce << "\nfinal_bce "
           << (result.epoch_bce.empty() ? result.initial_bce : result.epoch_bce.back()) << "\nintent_block "
           << (result.model.intent_block ? "on" : "off") << "\nwrote " << a.out << '\n';
  }
}

// ---------------------------------------------------------------- rerank

struct RerankArgs {
  std::string index;
  std::string contexts;
  std::string model;
  std::vector<std::string> scorer_cmd;
  int scorer_timeout_ms = 5000;
  std::string intent_model;
  FusionArgs fusion;
  std::size_t depth = 100;
  std::size_t top = 10;
};

std::unique_ptr<CandidateScorer> make_scorer(const std::string& model, const std::vector<std::string>& cmd,
                                             int timeout_ms) {
  if (!cmd.empty()) {
    return std::make_unique<ExternalProcessScorer>(cmd, std::chrono::milliseconds(timeout_ms));
  }
  return std::make_unique<LogisticScorer>(load_rerank_model(model));
}

void cmd_rerank(Session& s, const RerankArgs& a) {
  if (a.model.empty() == a.scorer_cmd.empty()) {
    throw CLI::ValidationError("rerank", "exactly one of --model and --scorer-cmd is required");
  }
  const auto index = load_index(a.index);
  const auto queries = load_queries(index.corpus, a.contexts, s, QuerySplit::kTest);
  const auto intent_model = maybe_intent_model(a.intent_model);
  const auto options = recall_options(a.fusion.w_encoder, a.fusion.w_cf, a.fusion.alpha, a.fusion.k);
  const auto lists = recall_all(queries, index, options, s.globals.threads);
  auto scorer = make_scorer(a.model, a.scorer_cmd, a.scorer_timeout_ms);
  s.header();
  std::size_t failures_total = 0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto rq = rerank_query_for(queries[i], index.corpus, intent_model ? &*intent_model : nullptr);
    std::size_t failures = 0;
    const auto ranked = rerank_full(lists[i], rq, index.corpus, *scorer, a.depth, &failures);
    failures_total += failures;
    if (s.records()) {
      const auto rank = ranked.rank_of(queries[i].gold_id);
      *s.out << json{{"query_id", queries[i].query_id}, {"gold_id", queries[i].gold_id},
                     {"intent", std::string(to_string(rq.intent))}, {"gold_rank", rank ? json(*rank) : json(nullptr)},
                     {"scorer_failures", failures}, {"candidates", ranked_json(ranked, a.top)}}
                    .dump()
             << '\n';
    } else {
      print_ranked_text(*s.out, queries[i], ranked, a.top);
    }
  }
  if (failures_total > 0) s.log->warn("scorer failed on {} candidate(s)", failures_total);
}

// ---------------------------------------------------------------- intent

struct IntentTrainArgs {
  std::string data;
  std::string out;
  IntentModelConfig config;
  IntentTrainOptions options;
};

void cmd_intent_train(Session& s, const IntentTrainArgs& a) {
  s.seeds["intent"] = std::to_string(a.options.seed);
  const auto data = load_labeled_sentences(a.data);
  const auto result = train_intent(data, a.config, a.options);
  save_intent_model(result.model, a.out);
  const auto metrics = evaluate_intent(result.model, data);
  s.header();
  if (s.records()) {
    *s.out << json{{"examples", data.size()}, {"initial_loss", result.initial_loss},
                   {"epoch_losses", result.epoch_losses}, {"train_accuracy", metrics.accuracy}}
                  .dump()
           << '\n';
  } else {
    *s.out << "examples " << data.size() << "\ninitial_loss " << result.initial_loss << "\nfinal_loss "
           << (result.epoch_losses.empty() ? result.initial_loss : result.epoch_losses.back())
           << "\ntrain_accuracy " << metrics.accuracy << "\nwrote " << a.out << '\n';
  }
}

struct IntentPredictArgs {
  std::string model;
  std::vector<std::string> texts;
};

void cmd_intent_predict(Session& s, const IntentPredictArgs& a) {
  const auto model = load_intent_model(a.model);
  s.header();
  for (const auto& text : a.texts) {
    const auto p = classify_intent(text, model);
    const auto label = argmax_intent(p);
    if (s.records()) {
      *s.out << json{{"text", text}, {"label", std::string(to_string(label))},
                     {"probabilities", {{"background", p[0]}, {"method", p[1]}, {"comparative", p[2]}}}}
                    .dump()
             << '\n';
    } else {
      *s.out << to_string(label) << '\t' << p[0] << ' ' << p[1] << ' ' << p[2] << '\t' << text << '\n';
    }
  }
}

struct IntentEvalArgs {
  std::string data;
  std::string model;
  std::size_t folds = 0;
  std::string plot;
  IntentModelConfig config;
  IntentTrainOptions options;
};

void cmd_intent_eval(Session& s, const IntentEvalArgs& a) {
  s.seeds["intent"] = std::to_string(a.options.seed);
  const auto data = load_labeled_sentences(a.data);
  if (data.empty()) throw std::invalid_argument("evaluation data is empty");
  IntentMetrics metrics;
  std::vector<double> fold_f1;
  std::string mode;
  if (!a.model.empty()) {
    metrics = evaluate_intent(load_intent_model(a.model), data);
    mode = "model";
  } else if (a.folds >= 2) {
    const auto cv = cross_validate_intent(data, a.folds, a.config, a.options);
    metrics = cv.pooled;
    fold_f1 = cv.fold_macro_f1;
    mode = std::to_string(a.folds) + "-fold";
  } else {
    std::vector<LabeledSentence> train, test;
    for (std::size_t i = 0; i < data.size(); ++i) (i % 5 == 4 ? test : train).push_back(data[i]);
    metrics = evaluate_intent(train_intent(train, a.config, a.options).model, test);
    mode = "holdout";
  }
  if (!a.plot.empty()) {
    std::ofstream plot(a.plot, std::ios::binary);
    if (!plot) throw std::runtime_error("cannot write " + a.plot);
    plot << confusion_matrix_svg(metrics);
  }
  s.header();
  if (s.records()) {
    auto j = json::parse(metrics_to_json(metrics));
    j["mode"] = mode;
    if (!fold_f1.empty()) j["fold_macro_f1"] = fold_f1;
    *s.out << j.dump() << '\n';
  } else {
    *s.out << "mode " << mode << '\n' << metrics_to_text(metrics);
  }
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string index;
  std::string queries;
  std::string k_list = "10,100,200,500,1000,2000";
  std::string rerank;
  std::string intent_model;
  FusionArgs fusion;
  std::size_t depth = 100;
};

void cmd_eval(Session& s, const EvalArgs& a) {
  const auto ks = parse_k_list(a.k_list);
  const auto index = load_index(a.index);
  const auto queries = load_queries(index.corpus, a.queries, s, QuerySplit::kTest);
  if (queries.empty()) throw std::invalid_argument("no queries to evaluate");
  const auto intent_model = maybe_intent_model(a.intent_model);
  PipelineOptions po;
  po.recall = recall_options(a.fusion.w_encoder, a.fusion.w_cf, a.fusion.alpha, a.fusion.k);
  po.ks = ks;
  po.rerank_depth = a.depth;
  po.threads = s.globals.threads;
  std::unique_ptr<LogisticScorer> scorer;
  if (!a.rerank.empty()) scorer = std::make_unique<LogisticScorer>(load_rerank_model(a.rerank));
  const auto result = evaluate_pipeline(queries, index, po, scorer.get(), intent_model ? &*intent_model : nullptr);
  s.header();
  *s.out << (s.records() ? eval_records(result) : eval_table_text(result));
}

// ---------------------------------------------------------------- gen

struct GenArgs {
  std::string index;
  std::string contexts;
  std::string rerank;
  std::string intent_model;
  std::string backend = "stub";
  std::string out;
  std::string sft_out;
  FusionArgs fusion;
  std::size_t depth = 100;
  std::size_t limit = 0;
  bool reasoning = false;
};

/// Shared words of the two abstracts, as stand-in themes for SFT export.
CotRecord overlap_cot(const std::string& a, const std::string& b, const std::string& citation) {
  CotRecord cot;
  const auto ta = token_set(a);
  for (const auto& w : token_set(b)) {
    if (ta.count(w) && w.size() > 3) cot.keywords.push_back(w);
  }
  cot.citation = citation;
  return cot;
}

void cmd_gen(Session& s, const GenArgs& a) {
  const auto index = load_index(a.index);
  auto queries = load_queries(index.corpus, a.contexts, s, QuerySplit::kTest);
  if (a.limit > 0 && queries.size() > a.limit) queries.resize(a.limit);
  const auto intent_model = maybe_intent_model(a.intent_model);
  const auto options = recall_options(a.fusion.w_encoder, a.fusion.w_cf, a.fusion.alpha, a.fusion.k);
  const auto lists = recall_all(queries, index, options, s.globals.threads);
  std::unique_ptr<LogisticScorer> scorer;
  if (!a.rerank.empty()) scorer = std::make_unique<LogisticScorer>(load_rerank_model(a.rerank));
  CompletionFn complete;
  if (a.backend == "remote") complete = remote_completion(ChatConfig::from_env(kGenerationModelVariable));

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + a.out);
  }
  std::vector<SftRecord> sft;
  std::size_t hits = 0, generated = 0;
  s.header();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const auto rq = rerank_query_for(q, index.corpus, intent_model ? &*intent_model : nullptr);
    const auto ranked = scorer ? rerank_full(lists[i], rq, index.corpus, *scorer, a.depth) : lists[i];
    if (ranked.empty()) {
      s.log->warn("query {} has no candidates", q.query_id);
      continue;
    }
    const auto* cited = index.corpus.find(ranked[0].id);
    GenerationRequest req;
    req.request_id = q.query_id;
    req.citing_abstract = rq.citing_abstract;
    req.context = q.context;
    req.intent = rq.intent;
    req.cited_abstract = cited->abstract_text;
    req.cited_title = cited->title;
    req.request_reasoning = a.reasoning;
    const auto citation = generate_citation(req, complete);
    ++generated;
    const bool hit = ranked[0].id == q.gold_id;
    hits += hit ? 1 : 0;
    const json record = {{"query_id", q.query_id},
                         {"citing_id", q.citing_id},
                         {"gold_id", q.gold_id},
                         {"recommended_id", ranked[0].id},
                         {"hit", hit},
                         {"intent", std::string(to_string(req.intent))},
                         {"citing_abstract", req.citing_abstract},
                         {"context", req.context},
                         {"cited_abstract", req.cited_abstract},
                         {"citation", citation}};
    if (file.is_open()) file << record.dump() << '\n';
    if (s.records()) {
      *s.out << record.dump() << '\n';
    } else {
      *s.out << q.query_id << " -> " << ranked[0].id << (hit ? " (gold)" : "") << ": " << citation << '\n';
    }
    if (!a.sft_out.empty()) {
      sft.push_back(make_sft_record(req, overlap_cot(req.citing_abstract, req.cited_abstract, citation)));
    }
  }
  if (!a.sft_out.empty()) {
    const auto report = export_sft_records(sft, a.sft_out, s.warn());
    s.log->info("wrote {} SFT record(s), rejected {}", report.written, report.rejected.size());
  }
  s.log->info("generated {} citation(s), top-1 hit rate {}", generated,
              generated ? static_cast<double>(hits) / static_cast<double>(generated) : 0.0);
}

// ---------------------------------------------------------------- citeval

struct CitevalArgs {
  std::string input;
  std::string judge = "stub";
  std::string out;
  std::string audit;
  std::size_t max_in_flight = 4;
  int attempts = 3;
  int backoff_ms = 200;
};

void cmd_citeval(Session& s, const CitevalArgs& a) {
  std::ifstream in(a.input);
  if (!in) throw std::runtime_error("cannot open " + a.input);
  std::vector<JudgeInputs> inputs;
  std::vector<std::string> ids;
  std::vector<std::optional<double>> human;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError(line_no, "not a JSON object");
    JudgeInputs ji;
    ji.citing_abstract = j.value("citing_abstract", "");
    ji.context = j.value("context", "");
    ji.cited_abstract = j.value("cited_abstract", "");
    ji.citation = j.value("citation", "");
    if (auto label = parse_intent(j.value("intent", "background"))) ji.intent = *label;
    inputs.push_back(std::move(ji));
    ids.push_back(j.value("query_id", std::to_string(inputs.size())));
    human.push_back(j.contains("human") && j["human"].is_number() ? std::optional(j["human"].get<double>())
                                                                   : std::nullopt);
  }
  JudgeFn judge;
  if (a.judge == "remote") {
    judge = completion_judge_fn(remote_completion(ChatConfig::from_env(kJudgeModelVariable)));
  } else {
    judge = stub_judge_fn();
  }
  JudgeRunOptions options;
  options.max_attempts = a.attempts;
  options.backoff = std::chrono::milliseconds(a.backoff_ms);
  options.max_in_flight = a.max_in_flight;
  if (!a.audit.empty()) options.audit_log = a.audit;
  const auto run = run_judge(inputs, judge, options);

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + a.out);
  }
  s.header();
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < run.exchanges.size(); ++i) {
    const auto& ex = run.exchanges[i];
    json rec = {{"query_id", ids[i]}, {"ok", ex.report.has_value()}, {"attempts", ex.attempts}};
    if (ex.report) {
      rec["report"] = json::parse(report_to_json(*ex.report));
      if (human[i]) {
        xs.push_back(ex.report->composite);
        ys.push_back(*human[i]);
      }
    } else {
      rec["error"] = ex.error;
    }
    if (file.is_open()) file << rec.dump() << '\n';
    if (s.records()) *s.out << rec.dump() << '\n';
  }
  std::optional<double> r;
  if (xs.size() >= 2) {
    try {
      r = pearson_r(xs, ys);
    } catch (const std::invalid_argument& e) {
      s.log->warn("correlation with human ratings unavailable: {}", e.what());
    }
  }
  json summary = {{"record", "summary"}, {"requests", inputs.size()}, {"succeeded", run.succeeded},
                  {"failed", run.failed}};
  if (run.mean) summary["mean"] = json::parse(report_to_json(*run.mean));
  if (r) summary["pearson_r"] = *r;
  if (file.is_open()) file << summary.dump() << '\n';
  if (s.records()) {
    *s.out << summary.dump() << '\n';
  } else {
    *s.out << "requests " << inputs.size() << "\nsucceeded " << run.succeeded << "\nfailed " << run.failed << '\n';
    if (run.mean) {
      *s.out << "purpose " << run.mean->scores.purpose << "\naccuracy " << run.mean->scores.accuracy
             << "\ncontext_fit " << run.mean->scores.context_fit << "\ndensity " << run.mean->scores.density
             << "\ncomposite " << run.mean->composite << '\n';
    }
    if (r) *s.out << "pearson_r " << *r << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Session session;
  session.out = &out;
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  session.log = std::make_shared<spdlog::logger>("citerec", sink);
  session.log->set_pattern("[%l] %v");

  CLI::App app{"Local citation recommendation: recall, rerank, intent, evaluation and generation tooling"};
  app.name("citerec");
  app.set_config("--config", "", "Configuration file (flags override it)");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  auto& g = session.globals;
  app.add_option("--threads", g.threads, "Worker threads for per-query work")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Output format")
      ->capture_default_str()
      ->check(CLI::IsMember({"text", "records"}));
  app.add_option("--split", g.split, "Query split (auto: train for training commands, test otherwise)")
      ->capture_default_str()
      ->check(CLI::IsMember({"auto", "all", "train", "test"}));
  app.add_option("--log-level", g.log_level, "Log level")
      ->capture_default_str()
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::function<void()> action;

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic benchmark");
  c_synth->add_option("--papers", synth.spec.n_papers)->capture_default_str();
  c_synth->add_option("--clusters", synth.spec.n_clusters)->capture_default_str();
  c_synth->add_option("--seed", synth.spec.seed)->capture_default_str();
  c_synth->add_option("--p-intra", synth.spec.p_intra)->capture_default_str();
  c_synth->add_option("--p-inter", synth.spec.p_inter)->capture_default_str();
  c_synth->add_option("--popularity-spread", synth.spec.popularity_spread)->capture_default_str();
  c_synth->add_option("--contexts-per-paper", synth.spec.contexts_per_paper)->capture_default_str();
  c_synth->add_option("--intent-sentences", synth.spec.intent_sentences)->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();
  c_synth->callback([&] {
    session.seeds["synth"] = std::to_string(synth.spec.seed);
    action = [&] { cmd_synth(session, synth); };
  });

  IngestArgs ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a corpus and report statistics");
  c_ingest->add_option("--papers", ingest.papers)->required();
  c_ingest->add_option("--contexts", ingest.contexts);
  c_ingest->add_option("--out", ingest.out, "Write the normalized papers file here");
  c_ingest->callback([&] { action = [&] { cmd_ingest(session, ingest); }; });

  TrainEncoderArgs te;
  auto* c_te = app.add_subcommand("train-encoder", "Train the document encoder with triplet loss");
  c_te->add_option("--papers", te.papers)->required();
  c_te->add_option("--contexts", te.contexts)->required();
  c_te->add_option("--out", te.out, "Encoder directory")->required();
  c_te->add_option("--epochs", te.options.epochs)->capture_default_str();
  c_te->add_option("--lr", te.options.learning_rate)->capture_default_str();
  c_te->add_option("--margin", te.options.margin)->capture_default_str();
  c_te->add_option("--batch", te.options.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  c_te->add_option("--seed", te.options.seed)->capture_default_str();
  c_te->add_option("--init-seed", te.config.seed)->capture_default_str();
  c_te->add_option("--d-model", te.config.d_model)->capture_default_str();
  c_te->add_option("--heads", te.config.n_heads)->capture_default_str();
  c_te->add_option("--paragraph-layers", te.config.n_layers_paragraph)->capture_default_str();
  c_te->add_option("--document-layers", te.config.n_layers_document)->capture_default_str();
  c_te->add_option("--vocab", te.config.vocab_buckets)->capture_default_str();
  c_te->add_option("--max-tokens", te.config.max_tokens)->capture_default_str();
  c_te->add_flag("--no-positional", te.no_positional, "Disable positional encoding");
  c_te->add_option_function<std::string>(
          "--pe", [&te](const std::string& v) { te.no_positional = v == "off"; }, "Positional encoding on|off")
      ->check(CLI::IsMember({"on", "off"}));
  c_te->callback([&] { action = [&] { cmd_train_encoder(session, te); }; });

  BuildIndexArgs bi;
  auto* c_bi = app.add_subcommand("build-index", "Embed every paper and write an index directory");
  c_bi->add_option("--papers", bi.papers)->required();
  c_bi->add_option("--encoder", bi.encoder, "Encoder directory")->required();
  c_bi->add_option("--out", bi.out, "Index directory")->required();
  c_bi->callback([&] { action = [&] { cmd_build_index(session, bi); }; });

  RecallArgs rc;
  auto* c_rc = app.add_subcommand("recall", "Fused encoder + CF recall for each query");
  c_rc->add_option("--index", rc.index)->required();
  c_rc->add_option("--contexts,--queries", rc.contexts)->required();
  add_fusion_flags(c_rc, rc.fusion, true);
  c_rc->add_option("--out", rc.out, "Write full recall lists here");
  c_rc->add_option("--top", rc.top, "Candidates printed per query")->capture_default_str();
  c_rc->callback([&] { action = [&] { cmd_recall(session, rc); }; });

  CfDumpArgs cf;
  auto* c_cf = app.add_subcommand("cf-dump", "Print CF scores for a profile");
  c_cf->add_option("--index", cf.index)->required();
  c_cf->add_option("--citing", cf.citing, "Use this paper's references as the profile and hide its edges");
  c_cf->add_option("--profile", cf.profile, "Profile paper ids");
  c_cf->add_option("--algorithm", cf.algorithm)->capture_default_str()->check(CLI::IsMember({"sccf", "cscf", "blend"}));
  c_cf->add_option("--alpha", cf.alpha)->capture_default_str();
  c_cf->add_option("--top", cf.top)->capture_default_str();
  c_cf->callback([&] {
    if (cf.citing.empty() && cf.profile.empty()) throw CLI::RequiredError("--citing or --profile");
    action = [&] { cmd_cf_dump(session, cf); };
  });

  RerankTrainArgs rt;
  auto* c_rt = app.add_subcommand("rerank-train", "Train the logistic reranker on recall candidates");
  c_rt->add_option("--index", rt.index)->required();
  c_rt->add_option("--contexts,--queries", rt.contexts)->required();
  c_rt->add_option("--out", rt.out, "Model file")->required();
  c_rt->add_option("--intent-model", rt.intent_model, "Predict missing intents with this model");
  add_fusion_flags(c_rt, rt.fusion);
  c_rt->add_option("--negatives", rt.options.negatives_per_positive)->capture_default_str();
  c_rt->add_option("--epochs", rt.options.epochs)->capture_default_str();
  c_rt->add_option("--lr", rt.options.learning_rate)->capture_default_str();
  c_rt->add_option("--seed", rt.options.seed)->capture_default_str();
  c_rt->add_option("--depth", rt.depth, "Recall depth negatives are drawn from")->capture_default_str();
  c_rt->add_flag("--no-intent", rt.no_intent, "Zero the intent feature block");
  c_rt->callback([&] { action = [&] { cmd_rerank_train(session, rt); }; });

  RerankArgs rr;
  auto* c_rr = app.add_subcommand("rerank", "Rerank the head of each recall list");
  c_rr->add_option("--index", rr.index)->required();
  c_rr->add_option("--contexts,--queries", rr.contexts)->required();
  c_rr->add_option("--model", rr.model, "Logistic reranker model file");
  c_rr->add_option("--scorer-cmd", rr.scorer_cmd, "External scorer command and arguments");
  c_rr->add_option("--scorer-timeout-ms", rr.scorer_timeout_ms)->capture_default_str();
  c_rr->add_option("--intent-model", rr.intent_model);
  add_fusion_flags(c_rr, rr.fusion);
  c_rr->add_option("--depth", rr.depth)->capture_default_str();
  c_rr->add_option("--top", rr.top)->capture_default_str();
  c_rr->callback([&] { action = [&] { cmd_rerank(session, rr); }; });

  auto* c_intent = app.add_subcommand("intent", "Citation intent classifier");
  c_intent->require_subcommand(1);

  IntentTrainArgs it;
  auto* c_it = c_intent->add_subcommand("train", "Train the intent classifier");
  c_it->add_option("--data", it.data)->required();
  c_it->add_option("--out", it.out, "Model directory")->required();
  c_it->add_option("--epochs", it.options.epochs)->capture_default_str();
  c_it->add_option("--batch", it.options.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  c_it->add_option("--lr", it.options.learning_rate)->capture_default_str();
  c_it->add_option("--seed", it.options.seed)->capture_default_str();
  c_it->add_option("--hidden", it.config.hidden)->capture_default_str();
  c_it->add_option("--buckets", it.config.buckets)->capture_default_str();
  c_it->add_option("--dropout", it.config.dropout)->capture_default_str();
  c_it->callback([&] { action = [&] { cmd_intent_train(session, it); }; });

  IntentPredictArgs ip;
  auto* c_ip = c_intent->add_subcommand("predict", "Classify sentences");
  c_ip->add_option("--model", ip.model)->required();
  c_ip->add_option("--text", ip.texts)->required();
  c_ip->callback([&] { action = [&] { cmd_intent_predict(session, ip); }; });

  IntentEvalArgs ie;
  auto* c_ie = c_intent->add_subcommand("eval", "Evaluate a model, or cross-validate training");
  c_ie->add_option("--data", ie.data)->required();
  c_ie->add_option("--model", ie.model, "Evaluate this model instead of training");
  c_ie->add_option("--folds", ie.folds, "Cross-validation folds (default: one 80/20 split)");
  c_ie->add_option("--plot", ie.plot, "Write the confusion matrix as SVG");
  c_ie->add_option("--epochs", ie.options.epochs)->capture_default_str();
  c_ie->add_option("--batch", ie.options.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  c_ie->add_option("--lr", ie.options.learning_rate)->capture_default_str();
  c_ie->add_option("--seed", ie.options.seed)->capture_default_str();
  c_ie->add_option("--hidden", ie.config.hidden)->capture_default_str();
  c_ie->add_option("--buckets", ie.config.buckets)->capture_default_str();
  c_ie->add_option("--dropout", ie.config.dropout)->capture_default_str();
  c_ie->callback([&] { action = [&] { cmd_intent_eval(session, ie); }; });

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "MRR and R@K of recall and optional reranking");
  c_ev->add_option("--index", ev.index)->required();
  c_ev->add_option("--queries,--contexts", ev.queries)->required();
  c_ev->add_option("--k", ev.k_list, "Comma-separated K values")->capture_default_str();
  c_ev->add_option("--rerank", ev.rerank, "Logistic reranker model file");
  c_ev->add_option("--intent-model", ev.intent_model);
  add_fusion_flags(c_ev, ev.fusion);
  c_ev->add_option("--depth", ev.depth, "Rerank depth")->capture_default_str();
  c_ev->callback([&] { action = [&] { cmd_eval(session, ev); }; });

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Recommend the top paper and generate a citation sentence");
  c_gen->add_option("--index", gen.index)->required();
  c_gen->add_option("--contexts,--queries", gen.contexts)->required();
  c_gen->add_option("--rerank", gen.rerank, "Logistic reranker model file");
  c_gen->add_option("--intent-model", gen.intent_model);
  c_gen->add_option("--backend", gen.backend)->capture_default_str()->check(CLI::IsMember({"stub", "remote"}));
  c_gen->add_option("--out", gen.out, "Write generation records here");
  c_gen->add_option("--sft-out", gen.sft_out, "Write SFT records here");
  add_fusion_flags(c_gen, gen.fusion);
  c_gen->add_option("--depth", gen.depth)->capture_default_str();
  c_gen->add_option("--limit", gen.limit, "Maximum queries (0 = all)")->capture_default_str();
  c_gen->add_flag("--reasoning", gen.reasoning, "Ask the backend to reason before the citation");
  c_gen->callback([&] { action = [&] { cmd_gen(session, gen); }; });

  CitevalArgs ce;
  auto* c_ce = app.add_subcommand("citeval", "Score generated citations with the rubric");
  c_ce->add_option("--input", ce.input, "Generation records")->required();
  c_ce->add_option("--judge", ce.judge)->capture_default_str()->check(CLI::IsMember({"stub", "remote"}));
  c_ce->add_option("--out", ce.out, "Write per-record reports here");
  c_ce->add_option("--audit", ce.audit, "Append one record per judge call here");
  c_ce->add_option("--max-in-flight", ce.max_in_flight)->capture_default_str()->check(CLI::PositiveNumber);
  c_ce->add_option("--attempts", ce.attempts)->capture_default_str()->check(CLI::PositiveNumber);
  c_ce->add_option("--backoff-ms", ce.backoff_ms)->capture_default_str();
  c_ce->callback([&] { action = [&] { cmd_citeval(session, ce); }; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    err << app.help();
    return kExitUsage;
  }

  session.log->set_level(spdlog::level::from_str(g.log_level));
  for (const auto* sub = &app; sub != nullptr;) {
    const auto subs = sub->get_subcommands();
    if (subs.empty()) break;
    sub = subs.front();
    session.command += (session.command.empty() ? "" : " ") + sub->get_name();
  }
  session.config_text = app.config_to_str(true, false);

  try {
    if (action) action();
    out.flush();
    return kExitOk;
  } catch (const CLI::Error& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    err << "error: " << msg << '\n';
    return kExitFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace citerec::cli
