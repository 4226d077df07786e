// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Binary model checkpoints, version 1. All integers and reals are little
// endian regardless of host.
//
//   "SKPF"                      magic
//   u16  version                 (1)
//   u32  vocab_size, d_model, n_layers, n_heads, d_ff, max_seq_len
//   u8   norm_placement          (0 post, 1 pre)
//   f32  layernorm_eps
//   u64  init seed
//   f32  init stddev
//   u32  tensor count
//   per tensor: u16 name length, name bytes, u8 ndims, u32 dims[ndims],
//               u64 absolute payload offset
//   payloads: f32, row-major

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "skiplab/model.hpp"

namespace skiplab {

inline constexpr char kCheckpointMagic[4] = {'S', 'K', 'P', 'F'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BadMagic : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class UnsupportedVersion : public CheckpointError {
 public:
  UnsupportedVersion(const std::string& what, std::uint16_t version)
      : CheckpointError(what), version_(version) {}
  std::uint16_t version() const noexcept { return version_; }

 private:
  std::uint16_t version_;
};

class TruncatedCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// The directory disagrees with the config block: a missing, duplicated,
/// misnamed or misshaped tensor, or overlapping payloads.
class InconsistentCheckpoint : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

std::vector<std::uint8_t> serialize(const Model& model);
Model deserialize(std::span<const std::uint8_t> bytes);

/// Writes through a temporary sibling file and renames it into place.
void save(const Model& model, const std::filesystem::path& path);
Model load(const std::filesystem::path& path);

/// Gaussian(0, 0.02) matrices, zero biases, unit norm gains. Deterministic
/// in (cfg, seed).
ModelWeights generate_random_model(const ModelConfig& cfg, std::uint64_t seed);

/// generate_random_model wrapped with its config and init record.
Model make_random_model(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace skiplab
