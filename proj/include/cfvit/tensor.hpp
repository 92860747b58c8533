// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfvit {

enum class ErrorKind {
  Dimension,
  InvalidValue,
  Config,
  Consistency,
  Parse,
  Io,
  Validation,
};

const char* to_string(ErrorKind kind);

// All library failures are reported through this exception; `kind()` lets
// callers (and the CLI) distinguish shape errors from bad files.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Dense row-major float32 array. Extents are all >= 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<float>> rows);
  static Tensor vector(std::initializer_list<float> values);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  // 2-D helpers.
  std::size_t rows() const;
  std::size_t cols() const;
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  std::span<const float> row(std::size_t r) const;
  std::span<float> row(std::size_t r);

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  Tensor reshaped(std::vector<std::size_t> shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// Categories a matmul can be charged to. The first three are the terms the
// analytic encoder cost (3ND^2 + 2N^2D, 8ND^2) accounts for.
enum class OpKind : std::size_t {
  QkvProjection,
  Attention,
  Ffn,
  OutProjection,
  PatchEmbed,
  Head,
  Reuse,
  Other,
  Count_,
};

inline constexpr std::size_t kOpKindCount = static_cast<std::size_t>(OpKind::Count_);

const char* to_string(OpKind kind);

// Multiply-accumulate tally for one forward pass. Single owner; not shared
// between concurrent inferences.
class OpCounter {
 public:
  void add(OpKind kind, std::uint64_t mul_adds) noexcept {
    by_kind_[static_cast<std::size_t>(kind)] += mul_adds;
  }
  std::uint64_t mul_adds() const noexcept;
  std::uint64_t mul_adds(OpKind kind) const noexcept {
    return by_kind_[static_cast<std::size_t>(kind)];
  }
  // qkv + attention + ffn: the portion covered by the analytic encoder cost.
  std::uint64_t encoder_core() const noexcept {
    return mul_adds(OpKind::QkvProjection) + mul_adds(OpKind::Attention) + mul_adds(OpKind::Ffn);
  }
  void reset() noexcept { by_kind_.fill(0); }

 private:
  std::array<std::uint64_t, kOpKindCount> by_kind_{};
};

}  // namespace cfvit
