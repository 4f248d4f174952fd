#include "citerec/tensor_store.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace citerec {

std::optional<std::string> Manifest::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

const std::string& Manifest::require(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw FormatError("manifest missing key " + key);
  return it->second;
}

std::int64_t Manifest::require_int(const std::string& key) const {
  const auto& text = require(key);
  std::int64_t value = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw FormatError("manifest key " + key + " is not an integer: " + text);
  }
  return value;
}

double Manifest::require_double(const std::string& key) const {
  const auto& text = require(key);
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw FormatError("manifest key " + key + " is not a number: " + text);
  }
}

std::string Manifest::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries_) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
  }
  return out;
}

Manifest Manifest::parse(const std::string& text) {
  Manifest manifest;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("manifest line " + std::to_string(number) + " is not key=value");
    }
    manifest.entries_[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return manifest;
}

void Manifest::write(const std::filesystem::path& path) const {
  const auto text = serialize();
  write_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

Manifest Manifest::read(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  return parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Bytes read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  Bytes bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw FormatError("short read on " + path.string());
  return bytes;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed on " + path.string());
}

std::string crc32_hex(std::span<const std::byte> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed large buffers in chunks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = std::min<std::size_t>(bytes.size() - offset, 1U << 30);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset),
                static_cast<uInt>(chunk));
    offset += chunk;
  }
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

void append_f32le(Bytes& out, std::span<const float> values) {
  out.reserve(out.size() + values.size() * 4);
  for (float v : values) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int shift = 0; shift < 32; shift += 8) {
      out.push_back(static_cast<std::byte>((bits >> shift) & 0xFFU));
    }
  }
}

std::vector<float> decode_f32le(std::span<const std::byte> bytes) {
  if (bytes.size() % 4 != 0) throw FormatError("float buffer length not a multiple of 4");
  std::vector<float> values(bytes.size() / 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    }
    values[i] = std::bit_cast<float>(bits);
  }
  return values;
}

void append_varint(Bytes& out, std::uint64_t value) {
  while (value >= 0x80) {
    out.push_back(static_cast<std::byte>((value & 0x7F) | 0x80));
    value >>= 7;
  }
  out.push_back(static_cast<std::byte>(value));
}

std::uint64_t read_varint(std::span<const std::byte> bytes, std::size_t& offset) {
  std::uint64_t value = 0;
  for (int shift = 0; shift < 64; shift += 7) {
    if (offset >= bytes.size()) throw FormatError("truncated varint");
    const auto byte = static_cast<std::uint8_t>(bytes[offset++]);
    value |= static_cast<std::uint64_t>(byte & 0x7F) << shift;
    if ((byte & 0x80) == 0) return value;
  }
  throw FormatError("varint too long");
}

Bytes read_checked(const std::filesystem::path& dir, const Manifest& manifest,
                   const std::string& name) {
  auto bytes = read_bytes(dir / name);
  const auto& expected = manifest.require(name + ".crc32");
  const auto actual = crc32_hex(bytes);
  if (actual != expected) {
    throw ChecksumError(name + ": checksum " + actual + " does not match manifest " + expected);
  }
  return bytes;
}

}  // namespace citerec
