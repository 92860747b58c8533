// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfvit/config.hpp"
#include "cfvit/weights.hpp"

namespace cfvit::io {

// CFT1 weight container. Byte layout is documented in docs/formats.md; all
// integers and floats are little-endian.
inline constexpr char kContainerMagic[4] = {'C', 'F', 'T', '1'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kGeneratorTagBytes = 16;

struct ContainerHeader {
  ModelConfig config;
  std::string generator = "none";  // at most 16 bytes, e.g. "splitmix64"
  std::uint64_t seed = 0;
};

struct Container {
  ContainerHeader header;
  std::vector<NamedTensor> tensors;
};

// Serializes without checking tensors against the config; duplicate names
// are refused with Error(Validation).
std::vector<std::uint8_t> encode(const Container& c);

// Structural parse: bounds, offsets, checksum, duplicate names. Does not
// check tensors against the config; see `load`.
Container decode(const std::vector<std::uint8_t>& bytes);

struct Loaded {
  ModelWeights weights;
  ModelConfig config;
  ContainerHeader header;
};

void save(const ModelWeights& w, const ContainerHeader& header, const std::filesystem::path& path);
void save(const ModelWeights& w, const ModelConfig& cfg, const std::filesystem::path& path);

Loaded load(const std::filesystem::path& path);
Loaded load_bytes(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// splitmix64 (Steele, Lea, Flood). Each draw advances the state by the
// golden gamma 0x9E3779B97F4A7C15 and mixes it.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Top 24 bits mapped to [-1, 1): 2 * (x >> 40) / 2^24 - 1.
  float symmetric_unit();

 private:
  std::uint64_t state_;
};

inline constexpr const char* kSyntheticGenerator = "splitmix64";

// Deterministic weights for testing. Tensors are filled in canonical
// (container) order, row-major, one draw per element:
//   2-D linear weights  U[-1,1) / sqrt(fan_in)
//   linear biases, cls_token, pos_embed  0.02 * U[-1,1)
//   norm gains 1, norm biases 0 (no draws consumed)
ModelWeights generate_synthetic(const ModelConfig& cfg, std::uint64_t seed);

}  // namespace cfvit::io
