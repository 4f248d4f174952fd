#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "citerec/chat_client.hpp"
#include "citerec/intent_label.hpp"
#include "citerec/text.hpp"

namespace citerec {

struct GenerationRequest {
  std::string request_id;
  std::string citing_abstract;
  std::string context;
  IntentLabel intent = IntentLabel::kBackground;
  std::string cited_abstract;
  /// Title of the recommended paper, used by the stub backend.
  std::string cited_title;
  std::optional<std::string> cot;
  bool request_reasoning = false;
};

/// Empty when valid, otherwise the reason.
std::string validate(const GenerationRequest& request);

std::string build_generation_prompt(const GenerationRequest& request);
std::string build_cot_extraction_prompt(const std::string& citing_abstract, const std::string& cited_abstract);

struct CotRecord {
  std::vector<std::string> themes;
  std::vector<std::string> keywords;
  std::string reasoning;
  std::string citation;

  friend bool operator==(const CotRecord&, const CotRecord&) = default;
};

/// Parses the extraction reply ({"themes": [...], "keywords": [...]}),
/// tolerating text around the object.
std::optional<CotRecord> parse_cot_extraction(std::string_view raw);

/// One SFT training example: {prompt, reasoning, target}.
struct SftRecord {
  std::string prompt;
  std::string reasoning;
  std::string target;

  friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

SftRecord make_sft_record(const GenerationRequest& request, const CotRecord& cot);

/// One DPO example: {prompt, chosen, rejected}.
struct PreferencePair {
  std::string prompt;
  std::string chosen;
  std::string rejected;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

std::string validate(const SftRecord& record);
std::string validate(const PreferencePair& pair);

struct Rejection {
  std::size_t index = 0;
  std::string reason;
};

struct ExportReport {
  std::size_t written = 0;
  std::vector<Rejection> rejected;
};

/// Writes valid records one per line, skipping and reporting invalid ones.
/// An empty input writes an empty file and warns.
ExportReport export_sft_records(std::span<const SftRecord> records, const std::filesystem::path& path,
                                const WarningSink& warn = {});
ExportReport export_preference_pairs(std::span<const PreferencePair> pairs, const std::filesystem::path& path,
                                     const WarningSink& warn = {});

std::vector<SftRecord> load_sft_records(const std::filesystem::path& path);
std::vector<PreferencePair> load_preference_pairs(const std::filesystem::path& path);

/// Mean of softplus(-m) = -log sigmoid(m) over the margins r_w - r_l.
/// Throws std::invalid_argument for no margins or a non-finite margin.
double dpo_loss(std::span<const double> margins);

class GenerationError : public std::runtime_error {
 public:
  GenerationError(const std::string& request_id, const std::string& what)
      : std::runtime_error("request " + request_id + ": " + what), request_id_(request_id) {}
  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

/// Template fill keyed on the intent.
std::string stub_generate(const GenerationRequest& request);

/// With no completion function the stub is used. Backend failures become a
/// GenerationError naming the request.
std::string generate_citation(const GenerationRequest& request, const CompletionFn& complete = {});

/// The citation sentence in a model reply: the text after a final
/// "Citation:" line when present, otherwise the whole trimmed reply.
std::string extract_citation(std::string_view reply);

}  // namespace citerec
