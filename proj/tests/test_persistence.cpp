#include <gtest/gtest.h>

#include <filesystem>

#include "citerec/index_store.hpp"
#include "citerec/intent.hpp"
#include "citerec/tensor_store.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

namespace citerec {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

TEST(TensorStore, Crc32KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32_hex(std::as_bytes(std::span(s.data(), s.size()))), "cbf43926");
}

TEST(TensorStore, VarintRoundTrip) {
  Rng rng(2);
  Bytes buf;
  std::vector<std::uint64_t> values = {0, 1, 127, 128, 300, UINT64_MAX};
  for (int i = 0; i < 200; ++i) values.push_back(rng.next() >> rng.below(64));
  for (auto v : values) append_varint(buf, v);
  std::size_t offset = 0;
  for (auto v : values) EXPECT_EQ(read_varint(buf, offset), v);
  EXPECT_EQ(offset, buf.size());
}

TEST(TensorStore, FloatsAreLittleEndian) {
  Bytes buf;
  const std::vector<float> v = {1.0f};
  append_f32le(buf, v);
  ASSERT_EQ(buf.size(), 4u);
  EXPECT_EQ(buf[3], std::byte{0x3f});
  EXPECT_EQ(buf[2], std::byte{0x80});
  EXPECT_EQ(decode_f32le(buf), v);
}

TEST(Manifest, SerializesSortedKeys) {
  Manifest m;
  m.set("b", std::int64_t{2});
  m.set("a", "x");
  EXPECT_EQ(m.serialize(), "a=x\nb=2\n");
  EXPECT_EQ(Manifest::parse(m.serialize()), m);
}

TEST(IndexStore, RoundTripIsByteIdentical) {
  const auto index = testing::small_index();
  TempDir a, b;
  save_index(index, a.path());
  const auto loaded = load_index(a.path());
  EXPECT_TRUE(loaded == index);
  save_index(loaded, b.path());
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a.path())) {
    ++files;
    EXPECT_EQ(read_file(entry.path()), read_file(b / entry.path().filename().string()))
        << entry.path().filename();
  }
  EXPECT_GE(files, 6u);
}

TEST(IndexStore, UnknownVersionIsRejected) {
  TempDir dir;
  save_index(testing::small_index(), dir.path());
  auto m = Manifest::read(dir / "manifest.txt");
  m.set("format_version", std::int64_t{99});
  m.write(dir / "manifest.txt");
  EXPECT_THROW(load_index(dir.path()), VersionMismatchError);
}

TEST(IndexStore, TruncatedEmbeddingsFailChecksum) {
  TempDir dir;
  save_index(testing::small_index(), dir.path());
  const auto path = dir / "embeddings.bin";
  fs::resize_file(path, fs::file_size(path) - 4);
  EXPECT_THROW(load_index(dir.path()), ChecksumError);
}

TEST(IndexStore, FlippedGraphByteFailsChecksum) {
  TempDir dir;
  save_index(testing::small_index(), dir.path());
  auto bytes = read_file(dir / "graph.bin");
  bytes[bytes.size() / 2] ^= 0x01;
  write_file(dir / "graph.bin", bytes);
  EXPECT_THROW(load_index(dir.path()), ChecksumError);
}

TEST(IndexStore, MissingFileIsAFormatError) {
  TempDir dir;
  save_index(testing::small_index(), dir.path());
  fs::remove(dir / "vocab.txt");
  EXPECT_THROW(load_index(dir.path()), FormatError);
}

TEST(IntentStore, RoundTrip) {
  TempDir dir;
  IntentModelConfig config;
  config.buckets = 64;
  config.hidden = 8;
  const auto model = IntentModel::initialize(config, 4);
  save_intent_model(model, dir.path());
  const auto loaded = load_intent_model(dir.path());
  EXPECT_EQ(loaded.w1, model.w1);
  EXPECT_EQ(loaded.b2, model.b2);
  EXPECT_EQ(classify_intent("we adopt the dataset", loaded), classify_intent("we adopt the dataset", model));
}

}  // namespace
}  // namespace citerec
