/* Copyright 2026 The FusionNet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Serial reference kernels against their OpenMP counterparts.
//
//   ./bench_kernels --benchmark_filter=conv
//   OMP_NUM_THREADS=4 ./bench_kernels

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "fusionnet/kernels.hpp"

namespace {

namespace k = fusionnet::kernels;

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Layer-2 sized convolution of the desk-scale model: 9 -> 16 channels on 19x31.
k::Conv2dShape conv_shape(const benchmark::State& state) {
  k::Conv2dShape s;
  s.in_channels = static_cast<std::size_t>(state.range(0));
  s.height = 19;
  s.width = 31;
  s.out_channels = 2 * s.in_channels;
  s.kernel_h = s.kernel_w = 3;
  return s;
}

template <bool Parallel>
void BM_Conv2dForward(benchmark::State& state) {
  const k::Conv2dShape s = conv_shape(state);
  const auto in = random_vector(s.in_channels * s.height * s.width, 1);
  const auto ker = random_vector(s.out_channels * s.in_channels * 9, 2);
  std::vector<double> out(s.out_channels * s.out_height() * s.out_width());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_forward(s, in, ker, out);
    } else {
      k::serial::conv2d_forward(s, in, ker, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(out.size() * s.in_channels * 9));
}

template <bool Parallel>
void BM_Conv2dBackwardKernels(benchmark::State& state) {
  const k::Conv2dShape s = conv_shape(state);
  const auto in = random_vector(s.in_channels * s.height * s.width, 1);
  const auto g = random_vector(s.out_channels * s.out_height() * s.out_width(), 3);
  std::vector<double> gk(s.out_channels * s.in_channels * 9);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::conv2d_backward_kernels(s, g, in, gk);
    } else {
      k::serial::conv2d_backward_kernels(s, g, in, gk);
    }
    benchmark::DoNotOptimize(gk.data());
  }
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  k::GemmShape s{n, n, n, false, false, false};
  const auto a = random_vector(n * n, 4), b = random_vector(n * n, 5);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::gemm(s, a, b, c);
    } else {
      k::serial::gemm(s, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

template <bool Parallel>
void BM_Similarity(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const std::size_t bins = 152;
  const auto fi = random_vector(bins * t, 6), fj = random_vector(bins * t, 7);
  std::vector<double> sim(t * t), dist(t * t);
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::parallel::similarity_forward(bins, t, t, fi, fj, sim, dist);
    } else {
      k::serial::similarity_forward(bins, t, t, fi, fj, sim, dist);
    }
    benchmark::DoNotOptimize(sim.data());
  }
}

BENCHMARK(BM_Conv2dForward<false>)->Name("conv2d_forward/serial")->Arg(9)->Arg(65);
BENCHMARK(BM_Conv2dForward<true>)->Name("conv2d_forward/parallel")->Arg(9)->Arg(65);
BENCHMARK(BM_Conv2dBackwardKernels<false>)->Name("conv2d_backward_kernels/serial")->Arg(9)->Arg(65);
BENCHMARK(BM_Conv2dBackwardKernels<true>)->Name("conv2d_backward_kernels/parallel")->Arg(9)->Arg(65);
BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Similarity<false>)->Name("similarity_forward/serial")->Arg(31)->Arg(255);
BENCHMARK(BM_Similarity<true>)->Name("similarity_forward/parallel")->Arg(31)->Arg(255);

}  // namespace

BENCHMARK_MAIN();
