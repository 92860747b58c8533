// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "cfvit/kernels.hpp"
#include "test_util.hpp"

using namespace cfvit;
using cfvit::test::random_tensor;

TEST_CASE("matmul examples") {
  const Tensor id = Tensor::from_rows({{1, 0}, {0, 1}});
  const Tensor m = Tensor::from_rows({{1, 2}, {3, 4}});
  CHECK(kernels::matmul(id, m) == m);

  const Tensor sel = Tensor::from_rows({{1, 0}, {0, 0}});
  CHECK(kernels::matmul(sel, Tensor::from_rows({{5}, {7}})) == Tensor::from_rows({{5}, {0}}));

  OpCounter counter;
  const Tensor c = kernels::matmul(m, Tensor::from_rows({{1}, {1}}), &counter, OpKind::Other);
  CHECK(c == Tensor::from_rows({{3}, {7}}));
  CHECK(counter.mul_adds() == 4);
}

TEST_CASE("matmul rejects mismatched inner extents") {
  const Tensor a({2, 3});
  const Tensor b({2, 2});
  try {
    kernels::matmul(a, b);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
  }
}

TEST_CASE("matmul is associative on random 4x4 chains") {
  io::SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor({4, 4}, rng), b = random_tensor({4, 4}, rng), c = random_tensor({4, 4}, rng);
    const Tensor left = kernels::matmul(kernels::matmul(a, b), c);
    const Tensor right = kernels::matmul(a, kernels::matmul(b, c));
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < left.size(); ++i) {
      num = std::max(num, std::abs(static_cast<double>(left[i]) - right[i]));
      den = std::max(den, std::abs(static_cast<double>(right[i])));
    }
    CHECK(num / den <= 1e-4);
  }
}

TEST_CASE("op counter matches the analytic sum over a matmul chain") {
  io::SplitMix64 rng(3);
  OpCounter counter;
  std::uint64_t expected = 0;
  Tensor x = random_tensor({3, 5}, rng);
  for (std::size_t n : {7, 2, 9, 4}) {
    const Tensor w = random_tensor({x.cols(), n}, rng);
    expected += x.rows() * x.cols() * n;
    x = kernels::matmul(x, w, &counter, OpKind::Ffn);
  }
  CHECK(counter.mul_adds() == expected);
  CHECK(counter.mul_adds(OpKind::Ffn) == expected);
  CHECK(counter.mul_adds(OpKind::Attention) == 0);
}

TEST_CASE("softmax_rows examples") {
  const Tensor half = kernels::softmax_rows(Tensor::from_rows({{0, 0}}));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(half[1] == doctest::Approx(0.5).epsilon(1e-7));

  const Tensor big = kernels::softmax_rows(Tensor::from_rows({{1000, 0}}));
  CHECK(big[0] == 1.0f);
  CHECK(big[1] >= 0.0f);
  CHECK(big[1] < 1e-30f);

  const Tensor q = kernels::softmax_rows(Tensor::from_rows({{0.0f, static_cast<float>(std::log(3.0))}}));
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-6));

  Tensor nan = Tensor::from_rows({{0, 1}});
  nan[1] = std::nanf("");
  CHECK_THROWS_AS(kernels::softmax_rows(nan), Error);
}

TEST_CASE("softmax rows are probability vectors") {
  io::SplitMix64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t cols = 1 + rng.next() % 40;
    const Tensor m = random_tensor({3, cols}, rng, 30.0f);
    const Tensor s = kernels::softmax_rows(m);
    for (std::size_t r = 0; r < 3; ++r) {
      const auto row = s.row(r);
      double sum = 0.0;
      for (float v : row) {
        CHECK(v >= 0.0f);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("layer_norm examples") {
  const Tensor ones = Tensor::vector({1, 1});
  const Tensor zeros = Tensor::vector({0, 0});

  const Tensor constant = kernels::layer_norm(Tensor::from_rows({{3, 3}}), ones, zeros, 1e-6f);
  CHECK(constant[0] == 0.0f);
  CHECK(constant[1] == 0.0f);

  const Tensor b = Tensor::vector({0.25f, -2.0f});
  const Tensor affine = kernels::layer_norm(Tensor::from_rows({{1, 7}}), zeros, b, 1e-6f);
  CHECK(affine[0] == 0.25f);
  CHECK(affine[1] == -2.0f);

  const Tensor unit = kernels::layer_norm(Tensor::from_rows({{1, 3}}), ones, zeros, 1e-12f);
  CHECK(unit[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(unit[1] == doctest::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS_AS(kernels::layer_norm(Tensor::from_rows({{1, 2, 3}}), ones, zeros, 1e-6f), Error);
  CHECK_THROWS_AS(kernels::layer_norm(Tensor::from_rows({{1, 2}}), ones, zeros, 0.0f), Error);
}

TEST_CASE("gelu (tanh form)") {
  CHECK(kernels::gelu(Tensor::vector({0}))[0] == 0.0f);
  CHECK(kernels::gelu(Tensor::vector({20}))[0] == doctest::Approx(20.0).epsilon(1e-6));
  CHECK(kernels::gelu(Tensor::vector({-20}))[0] == doctest::Approx(0.0));

  // High-precision evaluation of the same closed form.
  const long double x = 1.0L;
  const long double c = std::sqrt(2.0L / 3.14159265358979323846264338327950288L);
  const long double ref = 0.5L * x * (1.0L + std::tanh(c * (x + 0.044715L * x * x * x)));
  const float got = kernels::gelu(Tensor::vector({1}))[0];
  CHECK(std::abs(static_cast<long double>(got) - ref) <= 1e-6L);

  // Gap to the erf definition at x = 1 (0.8413447460685429) is about 1.5e-4.
  const double erf_ref = 0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(got - erf_ref) < 2e-4);
}

TEST_CASE("parallel kernels are bitwise equal to the serial references") {
  kernels::set_num_threads(4);
  io::SplitMix64 rng(9);
  const Tensor x = random_tensor({97, 64}, rng);
  const Tensor w = random_tensor({64, 200}, rng);
  const Tensor bias = random_tensor({200}, rng);
  const Tensor gain = random_tensor({64}, rng), beta = random_tensor({64}, rng);
  const Tensor scores = random_tensor({97, 300}, rng, 10.0f);
  const Tensor wide = random_tensor({200, 200}, rng);

  CHECK(kernels::matmul(x, w) == kernels::serial::matmul(x, w));
  CHECK(kernels::linear(x, w, bias) == kernels::serial::linear(x, w, bias));
  CHECK(kernels::layer_norm(x, gain, beta, 1e-6f) == kernels::serial::layer_norm(x, gain, beta, 1e-6f));
  CHECK(kernels::softmax_rows(scores) == kernels::serial::softmax_rows(scores));
  CHECK(kernels::gelu(wide) == kernels::serial::gelu(wide));
  kernels::set_num_threads(1);
  CHECK(kernels::matmul(x, w) == kernels::serial::matmul(x, w));
}

TEST_CASE("multi-head attention charges 2*N*N*D and returns simplex class attention") {
  io::SplitMix64 rng(21);
  const Tensor q = random_tensor({7, 12}, rng), k = random_tensor({7, 12}, rng), v = random_tensor({7, 12}, rng);
  OpCounter counter;
  const auto r = kernels::multi_head_attention(q, k, v, 3, &counter);
  CHECK(counter.mul_adds(OpKind::Attention) == 2 * 7 * 7 * 12);
  CHECK(cfvit::test::on_simplex(r.class_attention, 1e-6));
  CHECK_THROWS_AS(kernels::multi_head_attention(q, k, v, 5), Error);
}

TEST_CASE("tensor construction invariants") {
  CHECK_THROWS_AS(Tensor({2, 0}), Error);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), Error);
  CHECK(Tensor({2, 3}).size() == 6);
}
