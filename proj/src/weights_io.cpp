// SPDX-License-Identifier: Apache-2.0
#include "cfvit/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

static_assert(std::endian::native == std::endian::little, "CFT1 reader assumes a little-endian host");

namespace cfvit::io {

namespace {

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxNameBytes = 4096;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  std::size_t size() const { return out_.size(); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  void bytes(void* dst, std::size_t n, const std::string& region) {
    if (n > in_.size() - pos_) {
      throw Error(ErrorKind::Parse, "truncated " + region + ": needs bytes [" + std::to_string(pos_) + ", " +
                                        std::to_string(pos_ + n) + "), file has " + std::to_string(in_.size()));
    }
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const std::string& region) {
    std::uint32_t v;
    bytes(&v, 4, region);
    return v;
  }
  std::uint64_t u64(const std::string& region) {
    std::uint64_t v;
    bytes(&v, 8, region);
    return v;
  }
  float f32(const std::string& region) {
    float v;
    bytes(&v, 4, region);
    return v;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

void write_config(Writer& w, const ModelConfig& c) {
  for (std::size_t v : {c.coarse_grid, c.fine_grid(), c.patch_px, c.embed_dim, c.depth, c.heads, c.num_classes,
                        c.mlp_ratio, c.reuse_hidden, c.ema_start}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  for (float v : {c.alpha, c.beta, c.eta, c.norm_eps}) w.f32(v);
}

ModelConfig read_config(Reader& r) {
  const std::string region = "config block";
  ModelConfig c;
  c.coarse_grid = r.u32(region);
  const std::uint32_t fine_grid = r.u32(region);
  c.patch_px = r.u32(region);
  c.embed_dim = r.u32(region);
  c.depth = r.u32(region);
  c.heads = r.u32(region);
  c.num_classes = r.u32(region);
  c.mlp_ratio = r.u32(region);
  c.reuse_hidden = r.u32(region);
  c.ema_start = r.u32(region);
  c.alpha = r.f32(region);
  c.beta = r.f32(region);
  c.eta = r.f32(region);
  c.norm_eps = r.f32(region);
  if (fine_grid != 2 * c.coarse_grid) {
    throw Error(ErrorKind::Validation, "config block fine_grid " + std::to_string(fine_grid) + " != 2 * coarse_grid " +
                                           std::to_string(c.coarse_grid));
  }
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode(const Container& c) {
  if (c.header.generator.size() > kGeneratorTagBytes) {
    throw Error(ErrorKind::Validation, "generator tag longer than 16 bytes");
  }
  std::set<std::string> names;
  for (const auto& [name, t] : c.tensors) {
    if (!names.insert(name).second) throw Error(ErrorKind::Validation, "duplicate tensor name '" + name + "'");
    if (name.empty() || name.size() > kMaxNameBytes) throw Error(ErrorKind::Validation, "bad tensor name length");
    if (t.rank() < 1 || t.rank() > kMaxRank) throw Error(ErrorKind::Validation, "tensor '" + name + "' rank out of range");
  }

  Writer w;
  w.bytes(kContainerMagic, 4);
  w.u32(kContainerVersion);
  char tag[kGeneratorTagBytes] = {};
  std::memcpy(tag, c.header.generator.data(), c.header.generator.size());
  w.bytes(tag, kGeneratorTagBytes);
  w.u64(c.header.seed);
  write_config(w, c.header.config);
  w.u32(static_cast<std::uint32_t>(c.tensors.size()));

  // Directory size is known up front, so absolute payload offsets can be
  // written in one pass.
  std::size_t dir_bytes = 0;
  for (const auto& [name, t] : c.tensors) dir_bytes += 4 + name.size() + 4 + 4 * t.rank() + 8;
  std::uint64_t offset = w.size() + dir_bytes + 4;
  for (const auto& [name, t] : c.tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.u64(offset);
    offset += 4 * t.size();
  }
  w.u32(crc_of(w.buffer().data(), w.size()));
  for (const auto& [name, t] : c.tensors) w.bytes(t.data().data(), 4 * t.size());
  return std::move(w.buffer());
}

Container decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  Container c;
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kContainerMagic, 4) != 0) throw Error(ErrorKind::Parse, "bad magic (expected \"CFT1\")");
  const std::uint32_t version = r.u32("version");
  if (version != kContainerVersion) {
    throw Error(ErrorKind::Parse, "unsupported container version " + std::to_string(version));
  }
  char tag[kGeneratorTagBytes + 1] = {};
  r.bytes(tag, kGeneratorTagBytes, "generator tag");
  c.header.generator = std::string(tag);
  c.header.seed = r.u64("seed");
  c.header.config = read_config(r);

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t offset;
    std::uint64_t numel;
  };
  const std::uint32_t count = r.u32("tensor count");
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string region = "directory entry " + std::to_string(i);
    Entry e;
    const std::uint32_t name_len = r.u32(region);
    if (name_len == 0 || name_len > kMaxNameBytes) {
      throw Error(ErrorKind::Parse, region + ": name length " + std::to_string(name_len) + " out of range");
    }
    e.name.resize(name_len);
    r.bytes(e.name.data(), name_len, region + " name");
    const std::uint32_t rank = r.u32(region);
    if (rank == 0 || rank > kMaxRank) {
      throw Error(ErrorKind::Parse, region + " ('" + e.name + "'): rank " + std::to_string(rank) + " out of range");
    }
    e.numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t extent = r.u32(region);
      if (extent == 0) throw Error(ErrorKind::Parse, region + " ('" + e.name + "'): zero extent");
      e.shape.push_back(extent);
      e.numel *= extent;
      if (e.numel > bytes.size()) {
        throw Error(ErrorKind::Parse, region + " ('" + e.name + "'): extents exceed file size");
      }
    }
    e.offset = r.u64(region);
    entries.push_back(std::move(e));
  }
  const std::size_t dir_end = r.pos();
  const std::uint32_t stored_crc = r.u32("directory checksum");
  if (stored_crc != crc_of(bytes.data(), dir_end)) {
    throw Error(ErrorKind::Parse, "header/directory checksum mismatch (corrupt directory)");
  }

  std::set<std::string> names;
  std::uint64_t expected = r.pos();
  for (const auto& e : entries) {
    if (!names.insert(e.name).second) throw Error(ErrorKind::Validation, "duplicate tensor name '" + e.name + "'");
    if (e.offset != expected) {
      throw Error(ErrorKind::Parse, "tensor '" + e.name + "' offset " + std::to_string(e.offset) +
                                        " overlaps or leaves a gap (expected " + std::to_string(expected) + ")");
    }
    const std::uint64_t end = e.offset + 4 * e.numel;
    if (end > bytes.size()) {
      throw Error(ErrorKind::Parse, "truncated payload of tensor '" + e.name + "': needs bytes [" +
                                        std::to_string(e.offset) + ", " + std::to_string(end) + "), file has " +
                                        std::to_string(bytes.size()));
    }
    std::vector<float> data(e.numel);
    std::memcpy(data.data(), bytes.data() + e.offset, 4 * e.numel);
    c.tensors.emplace_back(e.name, Tensor(e.shape, std::move(data)));
    expected = end;
  }
  if (expected != bytes.size()) {
    throw Error(ErrorKind::Parse, std::to_string(bytes.size() - expected) + " trailing bytes after payload");
  }
  return c;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::Io, "read failed on '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed on '" + path.string() + "'");
}

void save(const ModelWeights& w, const ContainerHeader& header, const std::filesystem::path& path) {
  header.config.validate();
  Container c{header, to_named(w, header.config)};
  write_file(path, encode(c));
}

void save(const ModelWeights& w, const ModelConfig& cfg, const std::filesystem::path& path) {
  save(w, ContainerHeader{cfg, "none", 0}, path);
}

Loaded load_bytes(const std::vector<std::uint8_t>& bytes) {
  Container c = decode(bytes);
  c.header.config.validate();
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : c.tensors) by_name.emplace(name, std::move(t));
  Loaded out{from_named(by_name, c.header.config), c.header.config, c.header};
  return out;
}

Loaded load(const std::filesystem::path& path) { return load_bytes(read_file(path)); }

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

float SplitMix64::symmetric_unit() {
  const auto top = static_cast<double>(next() >> 40);
  return static_cast<float>(2.0 * top / 16777216.0 - 1.0);
}

ModelWeights generate_synthetic(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SplitMix64 rng(seed);
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, shape] : required_tensors(cfg)) {
    Tensor t(shape);
    const bool is_norm = name.find("norm") != std::string::npos;
    const bool is_weight = name.ends_with(".weight");
    if (is_norm) {
      if (is_weight) std::fill(t.data().begin(), t.data().end(), 1.0f);
    } else if (is_weight && shape.size() == 2) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      for (float& v : t.data()) v = static_cast<float>(rng.symmetric_unit() * scale);
    } else {
      for (float& v : t.data()) v = 0.02f * rng.symmetric_unit();
    }
    tensors.emplace(name, std::move(t));
  }
  return from_named(tensors, cfg);
}

}  // namespace cfvit::io
