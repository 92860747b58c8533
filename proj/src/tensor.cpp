// SPDX-License-Identifier: Apache-2.0
#include "cfvit/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>

namespace cfvit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::InvalidValue: return "invalid value";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Validation: return "validation error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t checked_numel(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw Error(ErrorKind::Dimension, "tensor must have rank >= 1");
  for (auto e : shape) {
    if (e == 0) throw Error(ErrorKind::Dimension, "zero extent in shape " + shape_string(shape));
  }
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_numel(shape_) != data_.size()) {
    throw Error(ErrorKind::Dimension, "data length " + std::to_string(data_.size()) +
                                          " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<float> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::Dimension, "ragged row list");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
  return Tensor({values.size()}, std::vector<float>(values));
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) throw Error(ErrorKind::Dimension, "axis out of range");
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw Error(ErrorKind::Dimension, "expected rank 2, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  return shape_.back();
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const { return Tensor(std::move(shape), data_); }

const char* to_string(OpKind kind) {
  switch (kind) {
    case OpKind::QkvProjection: return "qkv";
    case OpKind::Attention: return "attention";
    case OpKind::Ffn: return "ffn";
    case OpKind::OutProjection: return "attn_out";
    case OpKind::PatchEmbed: return "patch_embed";
    case OpKind::Head: return "head";
    case OpKind::Reuse: return "reuse";
    case OpKind::Other: return "other";
    case OpKind::Count_: break;
  }
  return "?";
}

std::uint64_t OpCounter::mul_adds() const noexcept {
  return std::accumulate(by_kind_.begin(), by_kind_.end(), std::uint64_t{0});
}

}  // namespace cfvit
