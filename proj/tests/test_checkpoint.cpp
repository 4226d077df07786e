// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "skiplab/checkpoint.hpp"
#include "skiplab/error.hpp"
#include "test_util.hpp"

using namespace skiplab;

namespace {

// Byte offsets into a version-1 header.
constexpr std::size_t kVersionAt = 4;
constexpr std::size_t kDirectoryAt = 51;
// The first directory entry is "token_embedding": u16 length, 15 name bytes,
// u8 ndims, then two u32 dims and a u64 offset.
constexpr std::size_t kFirstDimAt = kDirectoryAt + 2 + 15 + 1;
constexpr std::size_t kFirstOffsetAt = kFirstDimAt + 8;

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

void put_u64(std::vector<std::uint8_t>& b, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

bool same_model(const Model& a, const Model& b) {
  if (a.config != b.config || a.init != b.init) return false;
  const auto ta = tensors(a.weights);
  const auto tb = tensors(b.weights);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (ta[i].values.size() != tb[i].values.size() ||
        std::memcmp(ta[i].values.data(), tb[i].values.data(), ta[i].values.size_bytes()) != 0)
      return false;
  return true;
}

}  // namespace

TEST(Checkpoint, RoundTripIsExact) {
  const Model m = testutil::jittered_model(testutil::small_config(NormPlacement::Pre), 51);
  const auto bytes = serialize(m);
  const Model back = deserialize(bytes);
  EXPECT_TRUE(same_model(m, back));
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(std::memcmp(bytes.data(), "SKPF", 4), 0);
}

TEST(Checkpoint, SaveAndLoadThroughAFile) {
  const Model m = make_random_model(testutil::micro_config(), 52);
  const auto path = std::filesystem::temp_directory_path() / "skiplab_ckpt_test.skpf";
  save(m, path);
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  EXPECT_TRUE(same_model(m, load(path)));
  std::filesystem::remove(path);
  EXPECT_THROW(load(path), CheckpointError);
}

TEST(Checkpoint, BadMagic) {
  auto bytes = serialize(make_random_model(testutil::micro_config(), 53));
  bytes[0] = 'X';
  EXPECT_THROW(deserialize(bytes), BadMagic);
}

TEST(Checkpoint, UnsupportedVersion) {
  auto bytes = serialize(make_random_model(testutil::micro_config(), 54));
  bytes[kVersionAt] = 2;
  try {
    deserialize(bytes);
    FAIL() << "expected UnsupportedVersion";
  } catch (const UnsupportedVersion& e) {
    EXPECT_EQ(e.version(), 2);
  }
}

TEST(Checkpoint, TruncationAnywhereIsDetected) {
  const auto bytes = serialize(make_random_model(testutil::micro_config(), 55));
  for (std::size_t len = 0; len < bytes.size(); len += 1 + len / 8) {
    const std::span<const std::uint8_t> cut(bytes.data(), len);
    EXPECT_THROW(deserialize(cut), CheckpointError) << "length " << len;
  }
  const std::span<const std::uint8_t> one_short(bytes.data(), bytes.size() - 1);
  EXPECT_THROW(deserialize(one_short), TruncatedCheckpoint);
}

TEST(Checkpoint, OffsetPastEndIsTruncation) {
  auto bytes = serialize(make_random_model(testutil::micro_config(), 56));
  put_u64(bytes, kFirstOffsetAt, bytes.size() + 100);
  EXPECT_THROW(deserialize(bytes), TruncatedCheckpoint);
}

TEST(Checkpoint, WrongDimsAreInconsistent) {
  auto bytes = serialize(make_random_model(testutil::micro_config(), 57));
  put_u32(bytes, kFirstDimAt, 12);
  EXPECT_THROW(deserialize(bytes), InconsistentCheckpoint);
}

TEST(Checkpoint, OverlappingPayloadsAreInconsistent) {
  auto bytes = serialize(make_random_model(testutil::micro_config(), 58));
  // Point the embedding at the second tensor's payload.
  std::uint64_t second = 0;
  const std::size_t second_entry = kFirstOffsetAt + 8;
  const std::size_t name_len = bytes[second_entry] | (bytes[second_entry + 1] << 8);
  const std::size_t second_offset_at = second_entry + 2 + name_len + 1 + 8;
  for (int i = 0; i < 8; ++i)
    second |= static_cast<std::uint64_t>(bytes[second_offset_at + i]) << (8 * i);
  put_u64(bytes, kFirstOffsetAt, second);
  EXPECT_THROW(deserialize(bytes), InconsistentCheckpoint);
}

TEST(Generate, DeterministicPerSeed) {
  const ModelConfig cfg = testutil::small_config();
  const ModelWeights a = generate_random_model(cfg, 7);
  const ModelWeights b = generate_random_model(cfg, 7);
  const ModelWeights c = generate_random_model(cfg, 8);
  const auto ta = tensors(a), tb = tensors(b), tc = tensors(c);
  for (std::size_t i = 0; i < ta.size(); ++i)
    ASSERT_TRUE(std::equal(ta[i].values.begin(), ta[i].values.end(), tb[i].values.begin()));
  EXPECT_FALSE(std::equal(ta[0].values.begin(), ta[0].values.end(), tc[0].values.begin()));
  for (float g : a.final_gain.values()) EXPECT_EQ(g, 1.0f);
  for (float v : a.layers[0].b1.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Generate, RandomConfigsRoundTrip) {
  Rng rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    ModelConfig cfg;
    cfg.n_heads = 1 + static_cast<std::uint32_t>(rng.uniform_index(4));
    cfg.d_model = cfg.n_heads * (1 + static_cast<std::uint32_t>(rng.uniform_index(6)));
    cfg.n_layers = 1 + static_cast<std::uint32_t>(rng.uniform_index(5));
    cfg.d_ff = 1 + static_cast<std::uint32_t>(rng.uniform_index(20));
    cfg.vocab_size = 2 + static_cast<std::uint32_t>(rng.uniform_index(300));
    cfg.max_seq_len = 1 + static_cast<std::uint32_t>(rng.uniform_index(64));
    cfg.norm_placement = trial % 2 ? NormPlacement::Pre : NormPlacement::Post;
    const Model m = make_random_model(cfg, rng.next_u64());
    const auto bytes = serialize(m);
    ASSERT_TRUE(same_model(m, deserialize(bytes))) << "trial " << trial;
  }
}
