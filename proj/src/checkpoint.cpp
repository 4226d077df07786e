// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <utility>

#include "skiplab/error.hpp"
#include "skiplab/random.hpp"

namespace skiplab {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::size_t size() const { return out_.size(); }
  // Overwrites a u64 written earlier; used to back-fill directory offsets.
  void patch_u64(std::size_t at, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw TruncatedCheckpoint("checkpoint header ends early");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct DirectoryEntry {
  std::string name;
  std::vector<std::size_t> dims;
  std::uint64_t offset = 0;
};

std::size_t element_count(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

}  // namespace

std::vector<std::uint8_t> serialize(const Model& model) {
  const ModelConfig& cfg = model.config;
  cfg.validate();
  validate_weights(cfg, model.weights);

  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  w.u32(cfg.vocab_size);
  w.u32(cfg.d_model);
  w.u32(cfg.n_layers);
  w.u32(cfg.n_heads);
  w.u32(cfg.d_ff);
  w.u32(cfg.max_seq_len);
  w.u8(static_cast<std::uint8_t>(cfg.norm_placement));
  w.f32(cfg.layernorm_eps);
  w.u64(model.init.seed);
  w.f32(model.init.stddev);

  const auto refs = tensors(model.weights);
  w.u32(static_cast<std::uint32_t>(refs.size()));
  std::vector<std::size_t> offset_slots;
  offset_slots.reserve(refs.size());
  for (const auto& t : refs) {
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.u8(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(static_cast<std::uint32_t>(d));
    offset_slots.push_back(w.size());
    w.u64(0);
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    w.patch_u64(offset_slots[i], w.size());
    for (float v : refs[i].values) w.f32(v);
  }
  return w.take();
}

Model deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw TruncatedCheckpoint("checkpoint shorter than its magic");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
    throw BadMagic("not a skiplab checkpoint (bad magic)");
  Reader r(bytes.subspan(4));

  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw UnsupportedVersion("unsupported checkpoint version " + std::to_string(version),
                             version);

  Model model;
  ModelConfig& cfg = model.config;
  cfg.vocab_size = r.u32();
  cfg.d_model = r.u32();
  cfg.n_layers = r.u32();
  cfg.n_heads = r.u32();
  cfg.d_ff = r.u32();
  cfg.max_seq_len = r.u32();
  const std::uint8_t placement = r.u8();
  if (placement > 1)
    throw InconsistentCheckpoint("unknown norm placement " + std::to_string(placement));
  cfg.norm_placement = static_cast<NormPlacement>(placement);
  cfg.layernorm_eps = r.f32();
  model.init.seed = r.u64();
  model.init.stddev = r.f32();
  try {
    cfg.validate();
  } catch (const RejectedInput& e) {
    throw InconsistentCheckpoint(std::string("invalid config block: ") + e.what());
  }

  const std::uint32_t count = r.u32();
  std::vector<DirectoryEntry> dir(count);
  for (auto& e : dir) {
    e.name = r.str(r.u16());
    e.dims.resize(r.u8());
    for (auto& d : e.dims) d = r.u32();
    e.offset = r.u64();
  }

  model.weights = zero_weights(cfg);
  auto refs = tensors(model.weights);
  if (dir.size() != refs.size())
    throw InconsistentCheckpoint("checkpoint holds " + std::to_string(dir.size()) +
                                 " tensors, config implies " + std::to_string(refs.size()));

  std::vector<std::pair<std::uint64_t, std::uint64_t>> extents;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const DirectoryEntry& e = dir[i];
    auto& t = refs[i];
    if (e.name != t.name)
      throw InconsistentCheckpoint("tensor " + std::to_string(i) + " is '" + e.name +
                                   "', expected '" + t.name + "'");
    if (e.dims != t.dims) throw InconsistentCheckpoint("tensor '" + e.name + "' has wrong dims");
    const std::uint64_t len = 4ull * element_count(e.dims);
    if (e.offset > bytes.size() || bytes.size() - e.offset < len)
      throw TruncatedCheckpoint("payload of '" + e.name + "' runs past end of file");
    extents.emplace_back(e.offset, e.offset + len);
    const std::uint8_t* p = bytes.data() + e.offset;
    for (auto& v : t.values) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[b]) << (8 * b);
      v = std::bit_cast<float>(u);
      p += 4;
    }
  }
  std::sort(extents.begin(), extents.end());
  for (std::size_t i = 1; i < extents.size(); ++i)
    if (extents[i].first < extents[i - 1].second)
      throw InconsistentCheckpoint("tensor payloads overlap");

  try {
    validate_weights(cfg, model.weights);
  } catch (const RejectedInput& e) {
    throw InconsistentCheckpoint(std::string("invalid weights: ") + e.what());
  }
  return model;
}

void save(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize(model);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write to " + tmp.string() + " failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

Model load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

ModelWeights generate_random_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelWeights w = zero_weights(cfg);
  Rng rng(seed);
  const InitInfo defaults;
  auto gaussian = [&](Matrix& m) {
    for (float& v : m.values()) v = static_cast<float>(rng.normal() * defaults.stddev);
  };
  gaussian(w.token_embedding);
  for (auto& lw : w.layers) {
    gaussian(lw.wq);
    gaussian(lw.wk);
    gaussian(lw.wv);
    gaussian(lw.wo);
    gaussian(lw.w1);
    gaussian(lw.w2);
    std::ranges::fill(lw.ln1_gain.values(), 1.0f);
    std::ranges::fill(lw.ln2_gain.values(), 1.0f);
  }
  std::ranges::fill(w.final_gain.values(), 1.0f);
  gaussian(w.output_projection);
  return w;
}

Model make_random_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m;
  m.config = cfg;
  m.weights = generate_random_model(cfg, seed);
  m.init = InitInfo{seed, InitInfo{}.stddev};
  return m;
}

}  // namespace skiplab
