#include "synthdet/archive.hpp"

#include <gtest/gtest.h>

#include <filesystem>

#include "synthdet/nn/layers.hpp"

using synthdet::CheckpointError;
using synthdet::TensorArchive;

namespace {

TensorArchive sample() {
  TensorArchive a;
  a.kind = "test";
  a.meta = {{"answer", 42}};
  a.tensors["w"] = {{2, 2}, {1.0, -2.0, 0.5, 1e-300}};
  a.tensors["b"] = {{1}, {3.25}};
  return a;
}

CheckpointError::Kind parse_kind(const std::vector<std::uint8_t>& bytes) {
  try {
    synthdet::parse_archive(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected CheckpointError";
  return CheckpointError::Kind::io;
}

}  // namespace

TEST(Archive, SerializeParseRoundTrip) {
  const auto a = sample();
  const auto b = synthdet::parse_archive(synthdet::serialize_archive(a));
  EXPECT_EQ(b.kind, "test");
  EXPECT_EQ(b.meta["answer"], 42);
  ASSERT_EQ(b.tensors.size(), 2u);
  EXPECT_EQ(b.tensors.at("w").shape, (std::vector<int>{2, 2}));
  EXPECT_EQ(b.tensors.at("w").values, a.tensors.at("w").values);
}

TEST(Archive, FlippedByteIsCorrupt) {
  auto bytes = synthdet::serialize_archive(sample());
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_EQ(parse_kind(bytes), CheckpointError::Kind::corrupt);
}

TEST(Archive, TruncatedFileIsCorrupt) {
  auto bytes = synthdet::serialize_archive(sample());
  bytes.resize(bytes.size() - 9);
  EXPECT_EQ(parse_kind(bytes), CheckpointError::Kind::corrupt);
}

TEST(Archive, MissingFileIsIoError) {
  try {
    synthdet::read_archive("/nonexistent/weights.sdw");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::io);
  }
}

TEST(Archive, StoreRestoreParameters) {
  synthdet::nn::Linear<float> a(3, 2), b(3, 2);
  synthdet::Rng rng(7);
  a.init(rng);
  TensorArchive ar;
  ar.store(a.parameters(), "lin.");
  ASSERT_TRUE(ar.tensors.count("lin.weight"));
  ar.restore(b.parameters(), "lin.");
  EXPECT_EQ(a.weight().value, b.weight().value);
}

TEST(Archive, RestoreRejectsShapeMismatch) {
  synthdet::nn::Linear<float> a(3, 2), b(2, 3);
  TensorArchive ar;
  ar.store(a.parameters());
  EXPECT_THROW(ar.restore(b.parameters()), CheckpointError);
}

TEST(Archive, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "synthdet_archive_test.sdw";
  synthdet::write_archive(sample(), path);
  EXPECT_EQ(synthdet::read_archive(path).tensors.at("b").values, std::vector<double>{3.25});
}
