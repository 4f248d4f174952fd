#include "citerec/index_store.hpp"

#include <sstream>

namespace citerec {

namespace {

Bytes to_bytes(const std::string& text) {
  const auto* p = reinterpret_cast<const std::byte*>(text.data());
  return Bytes(p, p + text.size());
}

std::string to_text(const Bytes& bytes) {
  return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void write_file(const std::filesystem::path& dir, Manifest& manifest, const std::string& name,
                const Bytes& bytes) {
  write_bytes(dir / name, bytes);
  manifest.set(name + ".crc32", crc32_hex(bytes));
}

Bytes encode_graph(const CitationGraph& graph) {
  Bytes out;
  for (NodeId n = 0; n < graph.node_count(); ++n) {
    const auto refs = graph.refs(n);
    append_varint(out, refs.size());
    NodeId previous = 0;
    for (NodeId target : refs) {
      append_varint(out, target - previous);
      previous = target;
    }
  }
  return out;
}

std::vector<std::vector<NodeId>> decode_graph(std::span<const std::byte> bytes, std::size_t nodes) {
  std::vector<std::vector<NodeId>> refs(nodes);
  std::size_t offset = 0;
  for (auto& out : refs) {
    const auto count = read_varint(bytes, offset);
    if (count > nodes) throw FormatError("graph.bin: implausible out-degree");
    NodeId previous = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
      const auto target = previous + read_varint(bytes, offset);
      if (target >= nodes) throw FormatError("graph.bin: edge target out of range");
      out.push_back(static_cast<NodeId>(target));
      previous = static_cast<NodeId>(target);
    }
  }
  if (offset != bytes.size()) throw FormatError("graph.bin: trailing bytes");
  return refs;
}

}  // namespace

void save_index(const DocumentIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest manifest;
  manifest.set("format", "citerec-index");
  manifest.set("format_version", kIndexFormatVersion);
  manifest.set("rows", static_cast<std::int64_t>(index.ids.size()));
  manifest.set("dim", static_cast<std::int64_t>(index.dim));
  manifest.set("graph.paper_count", static_cast<std::int64_t>(index.graph.paper_count()));
  manifest.set("graph.node_count", static_cast<std::int64_t>(index.graph.node_count()));

  Bytes embeddings;
  append_f32le(embeddings, index.embeddings);
  write_file(dir, manifest, "embeddings.bin", embeddings);
  write_file(dir, manifest, "graph.bin", encode_graph(index.graph));

  std::string vocab;
  for (const auto& id : index.graph.ids()) {
    if (id.find_first_of("\r\n") != std::string::npos) {
      throw FormatError("paper id contains a line break: " + id);
    }
    vocab += id;
    vocab += '\n';
  }
  write_file(dir, manifest, "vocab.txt", to_bytes(vocab));

  std::ostringstream papers;
  write_papers(papers, index.corpus);
  write_file(dir, manifest, "papers.jsonl", to_bytes(papers.str()));

  Bytes encoder;
  append_encoder(index.encoder, manifest, encoder);
  write_file(dir, manifest, "encoder.bin", encoder);
  manifest.write(dir / "manifest.txt");
}

DocumentIndex load_index(const std::filesystem::path& dir) {
  const auto manifest = Manifest::read(dir / "manifest.txt");
  if (manifest.require("format") != "citerec-index") throw FormatError("not an index directory");
  const auto& version = manifest.require("format_version");
  if (version != std::to_string(kIndexFormatVersion)) {
    throw VersionMismatchError("unsupported index format version " + version);
  }

  DocumentIndex index;
  const auto rows = static_cast<std::size_t>(manifest.require_int("rows"));
  index.dim = static_cast<std::size_t>(manifest.require_int("dim"));
  index.embeddings = decode_f32le(read_checked(dir, manifest, "embeddings.bin"));
  if (index.embeddings.size() != rows * index.dim) {
    throw FormatError("embeddings.bin holds " + std::to_string(index.embeddings.size()) +
                      " floats, manifest implies " + std::to_string(rows * index.dim));
  }

  std::vector<std::string> ids;
  {
    std::istringstream vocab(to_text(read_checked(dir, manifest, "vocab.txt")));
    for (std::string line; std::getline(vocab, line);) ids.push_back(line);
  }
  const auto node_count = static_cast<std::size_t>(manifest.require_int("graph.node_count"));
  const auto paper_count = static_cast<std::size_t>(manifest.require_int("graph.paper_count"));
  if (ids.size() != node_count) throw FormatError("vocab.txt size does not match manifest");
  auto refs = decode_graph(read_checked(dir, manifest, "graph.bin"), node_count);
  index.graph = CitationGraph::from_adjacency(std::move(ids), paper_count, std::move(refs));

  {
    std::istringstream papers(to_text(read_checked(dir, manifest, "papers.jsonl")));
    index.corpus = parse_papers(papers);
  }
  for (const auto& [id, paper] : index.corpus.papers) index.ids.push_back(id);
  if (index.ids.size() != rows) throw FormatError("papers.jsonl row count does not match manifest");

  index.encoder = read_encoder(manifest, read_checked(dir, manifest, "encoder.bin"));
  if (static_cast<std::size_t>(index.encoder.config.d_model) != index.dim) {
    throw FormatError("encoder width does not match embedding dimension");
  }
  return index;
}

}  // namespace citerec
