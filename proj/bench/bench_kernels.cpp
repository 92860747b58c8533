// SPDX-License-Identifier: Apache-2.0
// Times the OpenMP kernels against their serial references at ViT-S shapes
// and confirms the outputs are bitwise equal.
//
//   bench_kernels [repeats] [threads]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>

#include "cfvit/kernels.hpp"
#include "cfvit/weights_io.hpp"

using namespace cfvit;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, io::SplitMix64& rng) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = rng.symmetric_unit();
  return t;
}

double time_ms(int repeats, const std::function<Tensor()>& fn, Tensor& out) {
  out = fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) out = fn();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / repeats;
}

void row(const char* name, int repeats, const std::function<Tensor()>& serial, const std::function<Tensor()>& parallel) {
  Tensor a, b;
  const double ts = time_ms(repeats, serial, a);
  const double tp = time_ms(repeats, parallel, b);
  std::printf("%-28s %10.3f %10.3f %8.2fx  %s\n", name, ts, tp, ts / tp, a == b ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  if (argc > 2) kernels::set_num_threads(std::atoi(argv[2]));
  std::printf("threads: %d, repeats: %d\n", kernels::max_threads(), repeats);
  std::printf("%-28s %10s %10s %9s\n", "kernel", "serial ms", "omp ms", "speedup");

  io::SplitMix64 rng(1);
  const std::size_t d = 384;
  for (std::size_t n : {50, 125, 197}) {
    const Tensor x = random_tensor({n, d}, rng);
    const Tensor w_qkv = random_tensor({d, 3 * d}, rng);
    const Tensor w_fc1 = random_tensor({d, 4 * d}, rng);
    const Tensor b_qkv = random_tensor({3 * d}, rng);
    const Tensor gain = random_tensor({d}, rng), bias = random_tensor({d}, rng);
    const Tensor scores = random_tensor({n, n}, rng);
    const std::string tag = " N=" + std::to_string(n);

    row(("qkv linear" + tag).c_str(), repeats, [&] { return kernels::serial::linear(x, w_qkv, b_qkv); },
        [&] { return kernels::linear(x, w_qkv, b_qkv); });
    row(("fc1 matmul" + tag).c_str(), repeats, [&] { return kernels::serial::matmul(x, w_fc1); },
        [&] { return kernels::matmul(x, w_fc1); });
    row(("layer_norm" + tag).c_str(), repeats, [&] { return kernels::serial::layer_norm(x, gain, bias, 1e-6f); },
        [&] { return kernels::layer_norm(x, gain, bias, 1e-6f); });
    row(("softmax_rows" + tag).c_str(), repeats, [&] { return kernels::serial::softmax_rows(scores); },
        [&] { return kernels::softmax_rows(scores); });
    row(("gelu" + tag).c_str(), repeats, [&] { return kernels::serial::gelu(x); }, [&] { return kernels::gelu(x); });
  }
  return 0;
}
