#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "strokeseg/autodiff.hpp"
#include "strokeseg/networks.hpp"

namespace strokeseg {

// File layout, all integers little-endian:
//   "ASEGCKPT"  u32 version  u64 FNV-1a hash of every byte after the hash
//   u32 block count, then per block:
//     u32 name length, name, u8 dtype, u8 ndim, u32 dims[ndim], payload
// dtype: 0 = f32, 1 = f64, 2 = raw bytes (text), 3 = u64.

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class BlockType : std::uint8_t { kF32 = 0, kF64 = 1, kBytes = 2, kU64 = 3 };

struct Block {
  std::string name;
  BlockType type = BlockType::kBytes;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> payload;
};

/// Ordered collection of named blocks. Names are unique.
class Archive {
 public:
  void put_tensor(const std::string& name, const Tensor& t);
  void put_f64(const std::string& name, const std::vector<double>& values);
  void put_text(const std::string& name, const std::string& text);
  void put_u64(const std::string& name, std::uint64_t value);

  Tensor get_tensor(const std::string& name) const;
  std::vector<double> get_f64(const std::string& name) const;
  std::string get_text(const std::string& name) const;
  std::uint64_t get_u64(const std::string& name) const;

  /// Every entry (trainable and buffers) as prefix + name.
  void put_store(const std::string& prefix, const ParamStore& store);
  /// Replaces every entry of store from prefix + name. Missing entries or
  /// shape differences raise kIncompatible naming the first offender.
  void get_store(const std::string& prefix, ParamStore& store) const;

  bool has(const std::string& name) const { return find(name) != nullptr; }
  const Block* find(const std::string& name) const;
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

  std::vector<std::uint8_t> serialize() const;
  /// Validates magic, version and hash before decoding anything.
  static Archive deserialize(const std::vector<std::uint8_t>& bytes, const std::string& what);
  void save(const std::filesystem::path& path) const;
  static Archive load(const std::filesystem::path& path);

 private:
  const Block& need(const std::string& name, BlockType type) const;
  void push(Block b);
  std::vector<Block> blocks_;
};

/// Replaces the encoder parameters (entries named enc*) of net from an
/// archive whose entries are named either "seg/enc..." or "enc...". The
/// decoder and head are left untouched.
void import_encoder_weights(SegmentationNet& net, const Archive& archive);
void import_encoder_weights(SegmentationNet& net, const std::filesystem::path& path);

}  // namespace strokeseg
