// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <zlib.h>

#include <cstring>

#include "cfvit/weights_io.hpp"
#include "test_util.hpp"

using namespace cfvit;

namespace {

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[at + i];
  return v;
}

// Offset of the checksum, found by walking the directory.
std::size_t directory_end(const std::vector<std::uint8_t>& b) {
  std::size_t at = 4 + 4 + 16 + 8 + 10 * 4 + 4 * 4;
  const std::uint32_t count = read_u32(b, at);
  at += 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    at += 4 + read_u32(b, at);
    const std::uint32_t rank = read_u32(b, at);
    at += 4 + 4 * rank + 8;
  }
  return at;
}

ErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
  try {
    io::load_bytes(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("corrupted container was accepted");
  return ErrorKind::Validation;
}

}  // namespace

TEST_CASE("splitmix64 reference outputs") {
  io::SplitMix64 rng(0);
  CHECK(rng.next() == 0xE220A8397B1DCDAFull);
  CHECK(rng.next() == 0x6E789E6AA1B965F4ull);
  CHECK(rng.next() == 0x06C45D188009454Full);
}

TEST_CASE("symmetric_unit stays in [-1, 1)") {
  io::SplitMix64 rng(123);
  for (int i = 0; i < 10000; ++i) {
    const float u = rng.symmetric_unit();
    CHECK(u >= -1.0f);
    CHECK(u < 1.0f);
  }
}

TEST_CASE("synthetic weights are deterministic and shaped") {
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights a = io::generate_synthetic(cfg, 5);
  const ModelWeights b = io::generate_synthetic(cfg, 5);
  const ModelWeights c = io::generate_synthetic(cfg, 6);
  CHECK(to_named(a, cfg) == to_named(b, cfg));
  CHECK_FALSE(to_named(a, cfg) == to_named(c, cfg));
  CHECK_NOTHROW(check_shapes(a, cfg));
  CHECK(a.pos_table_fine.rows() == 1 + cfg.fine_patches());
  for (float g : a.encoders[0].norm1.gain.data()) CHECK(g == 1.0f);
}

TEST_CASE("round trip preserves every tensor bit-for-bit") {
  for (std::uint64_t seed : {0, 1, 99}) {
    ModelConfig cfg = test::tiny_config();
    cfg.eta = 0.6f;
    const ModelWeights w = io::generate_synthetic(cfg, seed);
    const io::Container c{{cfg, io::kSyntheticGenerator, seed}, to_named(w, cfg)};
    const auto bytes = io::encode(c);
    const auto loaded = io::load_bytes(bytes);
    CHECK(to_named(loaded.weights, cfg) == to_named(w, cfg));
    CHECK(loaded.config.embed_dim == cfg.embed_dim);
    CHECK(loaded.config.eta == cfg.eta);
    CHECK(loaded.header.generator == "splitmix64");
    CHECK(loaded.header.seed == seed);
    CHECK(io::encode(io::decode(bytes)) == bytes);
  }
}

TEST_CASE("header layout and checksum") {
  const ModelConfig cfg = test::tiny_config();
  const auto bytes = io::encode({{cfg, "x", 42}, to_named(io::generate_synthetic(cfg, 1), cfg)});
  CHECK(std::memcmp(bytes.data(), "CFT1", 4) == 0);
  CHECK(read_u32(bytes, 4) == 1);
  const std::size_t end = directory_end(bytes);
  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(end)));
  CHECK(read_u32(bytes, end) == crc);
}

TEST_CASE("every single-byte corruption of the header and directory is rejected") {
  ModelConfig cfg = test::tiny_config();
  cfg.depth = 1;
  cfg.ema_start = 1;
  const auto bytes = io::encode({{cfg, "x", 1}, to_named(io::generate_synthetic(cfg, 1), cfg)});
  const std::size_t end = directory_end(bytes) + 4;
  for (std::size_t i = 0; i < end; ++i) {
    auto bad = bytes;
    bad[i] ^= 0x5A;
    kind_of(bad);
  }
}

TEST_CASE("truncation, trailing bytes and bad magic") {
  const ModelConfig cfg = test::tiny_config();
  const auto bytes = io::encode({{cfg, "x", 1}, to_named(io::generate_synthetic(cfg, 1), cfg)});
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{40}, directory_end(bytes), bytes.size() - 1}) {
    const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    CHECK(kind_of(cut) == ErrorKind::Parse);
  }
  auto longer = bytes;
  longer.push_back(0);
  CHECK(kind_of(longer) == ErrorKind::Parse);
  auto magic = bytes;
  magic[3] = '2';
  CHECK(kind_of(magic) == ErrorKind::Parse);
}

TEST_CASE("duplicate, missing and misshaped tensors") {
  const ModelConfig cfg = test::tiny_config();
  auto named = to_named(io::generate_synthetic(cfg, 1), cfg);
  auto dup = named;
  dup.push_back(dup.front());
  CHECK_THROWS_AS(io::encode({{cfg, "x", 1}, dup}), Error);

  auto missing = named;
  missing.pop_back();
  CHECK(kind_of(io::encode({{cfg, "x", 1}, missing})) == ErrorKind::Validation);

  auto extra = named;
  extra.push_back({"bogus", Tensor({1})});
  CHECK(kind_of(io::encode({{cfg, "x", 1}, extra})) == ErrorKind::Validation);

  auto shaped = named;
  shaped.front().second = Tensor({2, 2});
  CHECK(kind_of(io::encode({{cfg, "x", 1}, shaped})) == ErrorKind::Validation);
}

TEST_CASE("save and load through the filesystem") {
  const auto dir = test::scratch_dir(CFVIT_TEST_TMP);
  const ModelConfig cfg = test::tiny_config();
  const ModelWeights w = io::generate_synthetic(cfg, 8);
  io::save(w, cfg, dir / "w.cft1");
  const auto loaded = io::load(dir / "w.cft1");
  CHECK(to_named(loaded.weights, cfg) == to_named(w, cfg));
  CHECK_THROWS_AS(io::load(dir / "absent.cft1"), Error);
}
