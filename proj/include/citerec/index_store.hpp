#pragma once

#include <filesystem>

#include "citerec/retrieval.hpp"

namespace citerec {

/// Current on-disk index layout version. Readers reject any other value.
inline constexpr int kIndexFormatVersion = 1;

/// Writes manifest.txt, embeddings.bin (row-major f32le), graph.bin
/// (per node: varint count, then varint deltas of the sorted target list),
/// vocab.txt (node ids, one per line), papers.jsonl and encoder.bin.
void save_index(const DocumentIndex& index, const std::filesystem::path& dir);

/// Throws VersionMismatchError for an unknown format version and
/// ChecksumError when any file does not match its manifest checksum.
DocumentIndex load_index(const std::filesystem::path& dir);

}  // namespace citerec
