#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "citerec/intent_label.hpp"
#include "citerec/text.hpp"

namespace citerec {

using PaperId = std::string;
using IdSet = std::set<PaperId>;

struct PaperRecord {
  PaperId id;
  std::string title;
  std::string abstract_text;
  IdSet references;
  std::optional<int> year;

  friend bool operator==(const PaperRecord&, const PaperRecord&) = default;
};

/// One line of a contexts file, before it is resolved against a corpus.
struct ContextRecord {
  std::string query_id;
  PaperId citing_id;
  std::string context;
  PaperId cited_id;
  std::optional<IntentLabel> intent;

  friend bool operator==(const ContextRecord&, const ContextRecord&) = default;
};

/// A masked citation slot. `profile` holds the citing paper's other
/// references; the gold target is never part of it.
struct CitationQuery {
  std::string query_id;
  PaperId citing_id;
  std::string context;
  IdSet profile;
  PaperId gold_id;
  std::optional<IntentLabel> intent;

  friend bool operator==(const CitationQuery&, const CitationQuery&) = default;
};

struct Corpus {
  std::map<PaperId, PaperRecord> papers;
  std::vector<CitationQuery> queries;

  const PaperRecord* find(const PaperId& id) const {
    auto it = papers.find(id);
    return it == papers.end() ? nullptr : &it->second;
  }
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateIdError : public std::runtime_error {
 public:
  explicit DuplicateIdError(const std::string& id)
      : std::runtime_error("duplicate paper id \"" + id + "\""), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Marker inserted between text_before and text_after when a context is
/// given as a split.
inline constexpr std::string_view kCitationSlot = "[CITE]";

Corpus parse_papers(std::istream& in, const WarningSink& warn = {});
Corpus load_papers(const std::filesystem::path& path,
                   const WarningSink& warn = {});

std::vector<ContextRecord> parse_contexts(std::istream& in,
                                          const WarningSink& warn = {});
std::vector<ContextRecord> load_contexts(const std::filesystem::path& path,
                                         const WarningSink& warn = {});

struct QueryBuild {
  std::vector<CitationQuery> queries;
  std::size_t dropped = 0;
};

/// Leave-one-out: profile = references(citing) \ {gold}. Contexts whose gold
/// is not a corpus paper are dropped and counted; an unknown citing paper is
/// a CorpusError.
QueryBuild build_queries(const Corpus& corpus,
                         std::span<const ContextRecord> contexts);

struct ValidationReport {
  std::size_t papers = 0;
  std::size_t references = 0;
  /// (citing id, missing id) pairs.
  std::vector<std::pair<PaperId, PaperId>> dangling;
};

ValidationReport validate(const Corpus& corpus);

std::string to_json_line(const PaperRecord& paper);
std::string to_json_line(const ContextRecord& context);
void write_papers(std::ostream& out, const Corpus& corpus);

enum class QuerySplit { kAll, kTrain, kTest };

/// Deterministic split by hashed query id; `test_fraction` of queries go to
/// the test side.
bool in_split(const std::string& query_id, QuerySplit split,
              double test_fraction = 0.2, std::uint64_t seed = 0);

std::vector<CitationQuery> select_split(std::span<const CitationQuery> queries,
                                        QuerySplit split,
                                        double test_fraction = 0.2,
                                        std::uint64_t seed = 0);

}  // namespace citerec
