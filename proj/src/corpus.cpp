#include "citerec/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

namespace citerec {

using nlohmann::json;

std::optional<IntentLabel> parse_intent(std::string_view text) {
  const auto lowered = to_lower(text);
  if (lowered == "background") return IntentLabel::kBackground;
  if (lowered == "method") return IntentLabel::kMethod;
  if (lowered == "comparative" || lowered == "comparison" ||
      lowered == "result") {
    return IntentLabel::kComparative;
  }
  return std::nullopt;
}

namespace {

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::string required_string(const json& record, const char* key,
                            std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || !it->is_string()) {
    throw ParseError(line, std::string("missing string field \"") + key + "\"");
  }
  return it->get<std::string>();
}

std::string optional_string(const json& record, const char* key,
                            std::size_t line) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return {};
  if (!it->is_string()) {
    throw ParseError(line, std::string("field \"") + key + "\" is not a string");
  }
  return it->get<std::string>();
}

json parse_line(const std::string& text, std::size_t line) {
  try {
    auto record = json::parse(text);
    if (!record.is_object()) throw ParseError(line, "record is not an object");
    return record;
  } catch (const json::parse_error& e) {
    throw ParseError(line, e.what());
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open " + path.string());
  return in;
}

}  // namespace

Corpus parse_papers(std::istream& in, const WarningSink& warn) {
  Corpus corpus;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    const auto record = parse_line(text, line);
    PaperRecord paper;
    paper.id = required_string(record, "id", line);
    if (paper.id.empty()) throw ParseError(line, "empty paper id");
    paper.title = optional_string(record, "title", line);
    paper.abstract_text = optional_string(record, "abstract", line);
    if (auto refs = record.find("references"); refs != record.end()) {
      if (!refs->is_array()) throw ParseError(line, "references is not an array");
      for (const auto& ref : *refs) {
        if (!ref.is_string() || ref.get<std::string>().empty()) {
          throw ParseError(line, "reference ids must be non-empty strings");
        }
        auto id = ref.get<std::string>();
        if (id == paper.id) {
          if (warn) warn("paper " + paper.id + " references itself; dropped");
          continue;
        }
        paper.references.insert(std::move(id));
      }
    }
    if (auto year = record.find("year"); year != record.end() && !year->is_null()) {
      if (!year->is_number_integer()) throw ParseError(line, "year is not an integer");
      paper.year = year->get<int>();
    }
    auto id = paper.id;
    if (!corpus.papers.emplace(id, std::move(paper)).second) {
      throw DuplicateIdError(id);
    }
  }
  if (corpus.papers.empty() && warn) warn("papers input is empty");
  return corpus;
}

Corpus load_papers(const std::filesystem::path& path, const WarningSink& warn) {
  auto in = open_or_throw(path);
  return parse_papers(in, warn);
}

std::vector<ContextRecord> parse_contexts(std::istream& in,
                                          const WarningSink& warn) {
  std::vector<ContextRecord> contexts;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (is_blank(text)) continue;
    const auto record = parse_line(text, line);
    ContextRecord context;
    context.query_id = required_string(record, "query_id", line);
    context.citing_id = required_string(record, "citing_id", line);
    context.cited_id = required_string(record, "cited_id", line);
    if (record.contains("context")) {
      context.context = required_string(record, "context", line);
    } else if (record.contains("text_before") || record.contains("text_after")) {
      const auto before = optional_string(record, "text_before", line);
      const auto after = optional_string(record, "text_after", line);
      context.context = before + " " + std::string(kCitationSlot) + " " + after;
    }
    if (is_blank(context.context)) throw ParseError(line, "empty context");
    if (auto intent = record.find("intent"); intent != record.end() && !intent->is_null()) {
      if (!intent->is_string()) throw ParseError(line, "intent is not a string");
      context.intent = parse_intent(intent->get<std::string>());
      if (!context.intent) {
        throw ParseError(line, "unknown intent \"" + intent->get<std::string>() + "\"");
      }
    }
    contexts.push_back(std::move(context));
  }
  if (contexts.empty() && warn) warn("contexts input is empty");
  return contexts;
}

std::vector<ContextRecord> load_contexts(const std::filesystem::path& path,
                                         const WarningSink& warn) {
  auto in = open_or_throw(path);
  return parse_contexts(in, warn);
}

QueryBuild build_queries(const Corpus& corpus,
                         std::span<const ContextRecord> contexts) {
  QueryBuild out;
  for (const auto& context : contexts) {
    const auto* citing = corpus.find(context.citing_id);
    if (citing == nullptr) {
      throw CorpusError("context " + context.query_id +
                        " names unknown citing paper " + context.citing_id);
    }
    if (corpus.find(context.cited_id) == nullptr ||
        context.cited_id == context.citing_id) {
      ++out.dropped;
      continue;
    }
    CitationQuery query;
    query.query_id = context.query_id;
    query.citing_id = context.citing_id;
    query.context = context.context;
    query.profile = citing->references;
    query.profile.erase(context.cited_id);
    query.gold_id = context.cited_id;
    query.intent = context.intent;
    out.queries.push_back(std::move(query));
  }
  return out;
}

ValidationReport validate(const Corpus& corpus) {
  ValidationReport report;
  report.papers = corpus.papers.size();
  for (const auto& [id, paper] : corpus.papers) {
    report.references += paper.references.size();
    for (const auto& ref : paper.references) {
      if (!corpus.papers.contains(ref)) report.dangling.emplace_back(id, ref);
    }
  }
  return report;
}

std::string to_json_line(const PaperRecord& paper) {
  json record = {{"id", paper.id},
                 {"title", paper.title},
                 {"abstract", paper.abstract_text},
                 {"references", json::array()}};
  for (const auto& ref : paper.references) record["references"].push_back(ref);
  if (paper.year) record["year"] = *paper.year;
  return record.dump();
}

std::string to_json_line(const ContextRecord& context) {
  json record = {{"query_id", context.query_id},
                 {"citing_id", context.citing_id},
                 {"context", context.context},
                 {"cited_id", context.cited_id}};
  if (context.intent) record["intent"] = std::string(to_string(*context.intent));
  return record.dump();
}

void write_papers(std::ostream& out, const Corpus& corpus) {
  for (const auto& [id, paper] : corpus.papers) out << to_json_line(paper) << '\n';
}

bool in_split(const std::string& query_id, QuerySplit split,
              double test_fraction, std::uint64_t seed) {
  if (split == QuerySplit::kAll) return true;
  // FNV-1a leaves the high bits of short keys poorly mixed; finish with the
  // splitmix64 finalizer before taking them.
  auto hash = fnv1a64(std::to_string(seed) + ":" + query_id);
  hash = (hash ^ (hash >> 30)) * 0xbf58476d1ce4e5b9ULL;
  hash = (hash ^ (hash >> 27)) * 0x94d049bb133111ebULL;
  hash ^= hash >> 31;
  const double u = static_cast<double>(hash >> 11) * 0x1.0p-53;
  const bool is_test = u < test_fraction;
  return split == QuerySplit::kTest ? is_test : !is_test;
}

std::vector<CitationQuery> select_split(std::span<const CitationQuery> queries,
                                        QuerySplit split, double test_fraction,
                                        std::uint64_t seed) {
  std::vector<CitationQuery> out;
  for (const auto& query : queries) {
    if (in_split(query.query_id, split, test_fraction, seed)) out.push_back(query);
  }
  return out;
}

}  // namespace citerec
