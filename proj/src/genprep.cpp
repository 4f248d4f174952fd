#include "citerec/genprep.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "citerec/corpus.hpp"
#include "json.hpp"

namespace citerec {

namespace {

std::string slot(const std::string& v) { return v.empty() ? std::string("(empty)") : v; }

std::string_view intent_instruction(IntentLabel intent) {
  switch (intent) {
    case IntentLabel::kBackground:
      return "Purpose: background. Situate the cited work as context for the citing paper's problem. "
             "State what it established without claiming the citing paper builds on it.";
    case IntentLabel::kMethod:
      return "Purpose: method. Say which method, tool, approach or dataset from the cited work the citing "
             "paper uses, and how.";
    case IntentLabel::kComparative:
      return "Purpose: comparative. Contrast the cited work's approach or results with the citing paper's, "
             "naming the point of comparison.";
  }
  return {};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string validate(const GenerationRequest& r) {
  if (r.citing_abstract.empty()) return "citing abstract is empty";
  if (r.context.empty()) return "context is empty";
  if (r.cited_abstract.empty()) return "cited abstract is empty";
  return {};
}

std::string build_generation_prompt(const GenerationRequest& r) {
  std::ostringstream p;
  p << "Write one citation sentence for the slot marked " << kCitationSlot << " in the context below.\n\n"
    << "Citing paper abstract:\n" << slot(r.citing_abstract) << "\n\n"
    << "Context:\n" << slot(r.context) << "\n\n"
    << "Cited paper abstract:\n" << slot(r.cited_abstract) << "\n\n"
    << "Citation intent: " << to_string(r.intent) << "\n" << intent_instruction(r.intent) << "\n";
  if (r.cot) p << "\nExtracted themes and keywords:\n" << *r.cot << "\n";
  if (r.request_reasoning) {
    p << "\nReasoning:\nFirst list the themes shared by the two abstracts, then explain how the cited work "
         "serves the stated purpose in this context. Then give the sentence on a final line starting "
         "with \"Citation:\".\n";
  } else {
    p << "\nReply with the citation sentence only.\n";
  }
  return p.str();
}

std::string build_cot_extraction_prompt(const std::string& citing_abstract, const std::string& cited_abstract) {
  std::ostringstream p;
  p << "Read the two abstracts and extract their key information.\n\n"
    << "Citing paper abstract:\n" << slot(citing_abstract) << "\n\n"
    << "Cited paper abstract:\n" << slot(cited_abstract) << "\n\n"
    << "Reply with a single JSON object:\n"
       "{\"themes\": [<short phrases shared or contrasted by the papers>], "
       "\"keywords\": [<technical terms>], \"reasoning\": <how the cited work relates to the citing work>}\n";
  return p.str();
}

std::optional<CotRecord> parse_cot_extraction(std::string_view raw) {
  for (auto open = raw.find('{'); open != std::string_view::npos; open = raw.find('{', open + 1)) {
    for (auto close = raw.rfind('}'); close != std::string_view::npos && close > open;
         close = raw.rfind('}', close - 1)) {
      const auto j = nlohmann::json::parse(raw.substr(open, close - open + 1), nullptr, false);
      if (j.is_discarded() || !j.is_object()) continue;
      if (!j.contains("themes") || !j.contains("keywords")) continue;
      try {
        CotRecord r;
        r.themes = j.at("themes").get<std::vector<std::string>>();
        r.keywords = j.at("keywords").get<std::vector<std::string>>();
        if (j.contains("reasoning") && j["reasoning"].is_string()) r.reasoning = j["reasoning"].get<std::string>();
        return r;
      } catch (const nlohmann::json::exception&) {
        continue;
      }
    }
  }
  return std::nullopt;
}

SftRecord make_sft_record(const GenerationRequest& request, const CotRecord& cot) {
  std::ostringstream reasoning;
  reasoning << "Themes: ";
  for (std::size_t i = 0; i < cot.themes.size(); ++i) reasoning << (i ? "; " : "") << cot.themes[i];
  reasoning << "\nKeywords: ";
  for (std::size_t i = 0; i < cot.keywords.size(); ++i) reasoning << (i ? "; " : "") << cot.keywords[i];
  if (!cot.reasoning.empty()) reasoning << "\n" << cot.reasoning;
  auto req = request;
  req.request_reasoning = true;
  return {build_generation_prompt(req), reasoning.str(), cot.citation};
}

std::string validate(const SftRecord& r) {
  if (r.prompt.empty()) return "empty prompt";
  if (r.target.empty()) return "empty target";
  return {};
}

std::string validate(const PreferencePair& p) {
  if (p.prompt.empty()) return "empty prompt";
  if (p.chosen.empty()) return "empty chosen";
  if (p.rejected.empty()) return "empty rejected";
  if (p.chosen == p.rejected) return "chosen equals rejected";
  return {};
}

namespace {

nlohmann::json to_json(const SftRecord& r) {
  return {{"prompt", r.prompt}, {"reasoning", r.reasoning}, {"target", r.target}};
}
nlohmann::json to_json(const PreferencePair& p) {
  return {{"prompt", p.prompt}, {"chosen", p.chosen}, {"rejected", p.rejected}};
}

template <typename T>
ExportReport export_records(std::span<const T> records, const std::filesystem::path& path, const WarningSink& warn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  ExportReport report;
  if (records.empty() && warn) warn("no records to export to " + path.string());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (auto reason = validate(records[i]); !reason.empty()) {
      report.rejected.push_back({i, std::move(reason)});
      continue;
    }
    out << to_json(records[i]).dump() << '\n';
    ++report.written;
  }
  if (!report.rejected.empty() && warn) {
    warn(std::to_string(report.rejected.size()) + " record(s) rejected while writing " + path.string());
  }
  return report;
}

template <typename F>
void for_each_record(const std::filesystem::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError(line, "not a JSON object");
    try {
      fn(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
}

}  // namespace

ExportReport export_sft_records(std::span<const SftRecord> records, const std::filesystem::path& path,
                                const WarningSink& warn) {
  return export_records(records, path, warn);
}

ExportReport export_preference_pairs(std::span<const PreferencePair> pairs, const std::filesystem::path& path,
                                     const WarningSink& warn) {
  return export_records(pairs, path, warn);
}

std::vector<SftRecord> load_sft_records(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  for_each_record(path, [&out](const nlohmann::json& j) {
    out.push_back({j.at("prompt").get<std::string>(), j.at("reasoning").get<std::string>(),
                   j.at("target").get<std::string>()});
  });
  return out;
}

std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path) {
  std::vector<PreferencePair> out;
  for_each_record(path, [&out](const nlohmann::json& j) {
    out.push_back({j.at("prompt").get<std::string>(), j.at("chosen").get<std::string>(),
                   j.at("rejected").get<std::string>()});
  });
  return out;
}

double dpo_loss(std::span<const double> margins) {
  if (margins.empty()) throw std::invalid_argument("dpo_loss needs at least one margin");
  double total = 0.0;
  for (double m : margins) {
    if (!std::isfinite(m)) throw std::invalid_argument("margin is not finite");
    // softplus(-m), stable for both signs
    total += m >= 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return total / static_cast<double>(margins.size());
}

std::string stub_generate(const GenerationRequest& r) {
  const std::string cited = r.cited_title.empty() ? std::string("the cited work") : r.cited_title;
  std::string gist = r.cited_abstract;
  if (const auto stop = gist.find('.'); stop != std::string::npos) gist.resize(stop);
  gist = trim(gist);
  if (!gist.empty()) gist[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(gist[0])));
  std::string lead;
  switch (r.intent) {
    case IntentLabel::kBackground:
      lead = "prior studies established that ";
      break;
    case IntentLabel::kMethod:
      lead = "we adopt the approach in which ";
      break;
    case IntentLabel::kComparative:
      lead = "our results are compared against the finding that ";
      break;
  }
  return "As shown in [" + cited + "], " + lead + gist + ".";
}

std::string extract_citation(std::string_view reply) {
  const auto marker = reply.rfind("Citation:");
  if (marker != std::string_view::npos) return trim(reply.substr(marker + 9));
  return trim(reply);
}

std::string generate_citation(const GenerationRequest& request, const CompletionFn& complete) {
  if (auto reason = validate(request); !reason.empty()) throw GenerationError(request.request_id, reason);
  if (!complete) return stub_generate(request);
  std::string reply;
  try {
    reply = complete(build_generation_prompt(request));
  } catch (const std::exception& e) {
    throw GenerationError(request.request_id, e.what());
  }
  auto sentence = extract_citation(reply);
  if (sentence.empty()) throw GenerationError(request.request_id, "backend returned an empty citation");
  return sentence;
}

}  // namespace citerec
