// SPDX-License-Identifier: Apache-2.0
#include "cfvit/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#define CFVIT_PRAGMA_HELPER(x) _Pragma(#x)
#define CFVIT_OMP(x) CFVIT_PRAGMA_HELPER(omp x)
#else
#define CFVIT_OMP(x)
#endif

namespace cfvit::kernels {

namespace {

// Below this many inner-loop operations per call, threading costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

void check_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw Error(ErrorKind::Dimension,
                "matmul expects rank-2 operands, got " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  if (a.cols() != b.rows()) {
    throw Error(ErrorKind::Dimension,
                "matmul inner extents differ: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
}

void check_linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.size() != weight.cols()) {
    throw Error(ErrorKind::Dimension,
                "linear weight " + shape_string(weight.shape()) + " / bias " + shape_string(bias.shape()) + " mismatch");
  }
  if (x.rank() != 2 || x.cols() != weight.rows()) {
    throw Error(ErrorKind::Dimension,
                "linear input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  }
}

// One output row of a*b (+bias). The t-outer loop keeps the reduction order
// for each c[i][j] fixed at t = 0..k-1.
void matmul_row(const Tensor& a, const Tensor& b, const Tensor* bias, std::size_t i, std::vector<double>& acc,
                std::span<float> out) {
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  const auto a_row = a.row(i);
  const auto bd = b.data();
  std::fill(acc.begin(), acc.end(), 0.0);
  for (std::size_t t = 0; t < k; ++t) {
    const double av = a_row[t];
    const float* brow = bd.data() + t * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
  }
  if (bias) {
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j]) + (*bias)[j];
  } else {
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j]);
  }
}

Tensor matmul_impl(const Tensor& a, const Tensor& b, const Tensor* bias, OpCounter* counter, OpKind kind,
                   bool parallel) {
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  Tensor c({m, n});
  const bool go_parallel = parallel && m > 1 && m * n * k >= kParallelThreshold;
  CFVIT_OMP(parallel if (go_parallel)) {
    std::vector<double> acc(n);
    CFVIT_OMP(for schedule(static))
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
      matmul_row(a, b, bias, static_cast<std::size_t>(i), acc, c.row(static_cast<std::size_t>(i)));
    }
  }
  if (counter) counter->add(kind, static_cast<std::uint64_t>(m) * n * k);
  return c;
}

void softmax_row(std::span<const float> in, std::span<float> out) {
  double mx = in[0];
  for (float v : in) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  std::vector<double> e(in.size());
  for (std::size_t j = 0; j < in.size(); ++j) {
    e[j] = std::exp(static_cast<double>(in[j]) - mx);
    sum += e[j];
  }
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = static_cast<float>(e[j] / sum);
}

Tensor softmax_impl(const Tensor& m, bool parallel) {
  for (float v : m.data()) {
    if (std::isnan(v)) throw Error(ErrorKind::InvalidValue, "softmax input contains NaN");
  }
  Tensor out(m.shape());
  const std::size_t c = m.shape().back();
  const std::size_t r = m.size() / c;
  CFVIT_OMP(parallel for schedule(static) if (parallel && r * c >= kParallelThreshold))
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * c;
    softmax_row(m.data().subspan(off, c), out.data().subspan(off, c));
  }
  return out;
}

Tensor layer_norm_impl(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps, bool parallel) {
  if (!(eps > 0.0f)) throw Error(ErrorKind::InvalidValue, "layer_norm eps must be > 0");
  const std::size_t d = x.shape().back();
  if (gain.rank() != 1 || bias.rank() != 1 || gain.size() != d || bias.size() != d) {
    throw Error(ErrorKind::Dimension, "layer_norm gain/bias " + shape_string(gain.shape()) + "/" +
                                          shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  const std::size_t r = x.size() / d;
  CFVIT_OMP(parallel for schedule(static) if (parallel && r * d >= kParallelThreshold))
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(r); ++i) {
    const std::size_t off = static_cast<std::size_t>(i) * d;
    const auto in = x.data().subspan(off, d);
    auto o = out.data().subspan(off, d);
    double mean = 0.0;
    for (float v : in) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (float v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = static_cast<float>((in[j] - mean) * inv * gain[j] + bias[j]);
    }
  }
  return out;
}

float gelu_scalar(float x) {
  const double v = x;
  return static_cast<float>(0.5 * v * (1.0 + std::tanh(kGeluSqrt2OverPi * (v + kGeluCubic * v * v * v))));
}

Tensor gelu_impl(const Tensor& x, bool parallel) {
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  CFVIT_OMP(parallel for schedule(static) if (parallel && in.size() >= kParallelThreshold))
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(in.size()); ++i) {
    o[static_cast<std::size_t>(i)] = gelu_scalar(in[static_cast<std::size_t>(i)]);
  }
  return out;
}

Tensor columns(const Tensor& m, std::size_t begin, std::size_t count) {
  Tensor out({m.rows(), count});
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r).subspan(begin, count);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter, OpKind kind) {
  check_matmul(a, b);
  return matmul_impl(a, b, nullptr, counter, kind, true);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, OpCounter* counter, OpKind kind) {
  check_linear(x, weight, bias);
  return matmul_impl(x, weight, &bias, counter, kind, true);
}

Tensor transpose(const Tensor& m) {
  const std::size_t r = m.rows();
  const std::size_t c = m.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& m) { return softmax_impl(m, true); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  return layer_norm_impl(x, gain, bias, eps, true);
}

Tensor gelu(const Tensor& x) { return gelu_impl(x, true); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::Dimension, "add shapes differ: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a;
  auto o = out.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bd[i];
  return out;
}

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                                     OpCounter* counter) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw Error(ErrorKind::Dimension, "attention q/k/v shapes differ");
  }
  const std::size_t n = q.rows();
  const std::size_t d = q.cols();
  if (heads == 0 || d % heads != 0) {
    throw Error(ErrorKind::Config, "embed dim " + std::to_string(d) + " not divisible by heads " + std::to_string(heads));
  }
  const std::size_t dh = d / heads;
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

  AttentionResult result{Tensor({n, d}), Tensor({n})};
  std::vector<double> cls(n, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = columns(q, h * dh, dh);
    const Tensor kh = columns(k, h * dh, dh);
    const Tensor vh = columns(v, h * dh, dh);
    Tensor scores = matmul(qh, transpose(kh), counter, OpKind::Attention);
    for (float& s : scores.data()) s *= scale;
    const Tensor attn = softmax_rows(scores);
    for (std::size_t j = 0; j < n; ++j) cls[j] += attn.at(0, j);
    const Tensor oh = matmul(attn, vh, counter, OpKind::Attention);
    for (std::size_t r = 0; r < n; ++r) {
      const auto src = oh.row(r);
      std::copy(src.begin(), src.end(), result.output.row(r).begin() + static_cast<std::ptrdiff_t>(h * dh));
    }
  }
  for (std::size_t j = 0; j < n; ++j) result.class_attention[j] = static_cast<float>(cls[j] / static_cast<double>(heads));
  return result;
}

namespace serial {

Tensor matmul(const Tensor& a, const Tensor& b, OpCounter* counter, OpKind kind) {
  check_matmul(a, b);
  return matmul_impl(a, b, nullptr, counter, kind, false);
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, OpCounter* counter, OpKind kind) {
  check_linear(x, weight, bias);
  return matmul_impl(x, weight, &bias, counter, kind, false);
}

Tensor softmax_rows(const Tensor& m) { return softmax_impl(m, false); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
  return layer_norm_impl(x, gain, bias, eps, false);
}

Tensor gelu(const Tensor& x) { return gelu_impl(x, false); }

}  // namespace serial

void set_num_threads(int n) {
#if defined(_OPENMP)
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace cfvit::kernels
