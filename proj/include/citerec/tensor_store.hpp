#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace citerec {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Plain-text key=value file, one entry per line, keys kept sorted so the
/// written bytes depend only on content.
class Manifest {
 public:
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void set(const std::string& key, std::int64_t value) { entries_[key] = std::to_string(value); }

  std::optional<std::string> get(const std::string& key) const;
  const std::string& require(const std::string& key) const;
  std::int64_t require_int(const std::string& key) const;
  double require_double(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  std::string serialize() const;
  static Manifest parse(const std::string& text);

  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);

  friend bool operator==(const Manifest&, const Manifest&) = default;

 private:
  std::map<std::string, std::string> entries_;
};

using Bytes = std::vector<std::byte>;

Bytes read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

/// CRC-32 (zlib polynomial) as 8 lowercase hex digits.
std::string crc32_hex(std::span<const std::byte> bytes);

/// Appends floats as 32-bit little-endian, independent of host byte order.
void append_f32le(Bytes& out, std::span<const float> values);
std::vector<float> decode_f32le(std::span<const std::byte> bytes);

/// LEB128 unsigned varint.
void append_varint(Bytes& out, std::uint64_t value);
std::uint64_t read_varint(std::span<const std::byte> bytes, std::size_t& offset);

/// Reads `name` from `dir` and checks it against manifest key `<name>.crc32`.
Bytes read_checked(const std::filesystem::path& dir, const Manifest& manifest,
                   const std::string& name);

/// Round-half-even to the nearest float, kept in a double.
inline double round_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

}  // namespace citerec
