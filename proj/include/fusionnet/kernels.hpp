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

#ifndef FUSIONNET_KERNELS_HPP_
#define FUSIONNET_KERNELS_HPP_

#include <cmath>
#include <cstddef>
#include <span>

// Dense numeric kernels behind the autodiff ops.
//
// Every kernel exists twice: `serial` is the plain reference loop nest and
// `parallel` distributes the outermost independent loop with OpenMP. Both
// accumulate each output element in the same order, so their results are
// bitwise identical for any thread count. Backward kernels accumulate (+=)
// into their gradient outputs.
namespace fusionnet::kernels {

struct Conv2dShape {
  std::size_t in_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;

  std::size_t out_height() const { return height - kernel_h + 1; }
  std::size_t out_width() const { return width - kernel_w + 1; }
};

// Matrix product C = op(A) * op(B) with op(A) [m x k], op(B) [k x n].
// When `accumulate` is set the product is added to C.
struct GemmShape {
  std::size_t m = 1;
  std::size_t k = 1;
  std::size_t n = 1;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

// 1 / (1 + norm) for two frames read with strides `sa` and `sb`. Below half an
// ulp of distance the quotient rounds to 1; unequal frames then get the largest
// double under 1 so that a score of exactly 1 always means equal frames.
inline double frame_similarity(double norm, const double* a, std::size_t sa, const double* b, std::size_t sb,
                               std::size_t bins) {
  const double s = 1.0 / (1.0 + norm);
  if (s < 1.0) return s;
  for (std::size_t r = 0; r < bins; ++r) {
    if (a[r * sa] != b[r * sb]) return std::nextafter(1.0, 0.0);
  }
  return s;
}

#define FUSIONNET_KERNEL_DECLS                                                                  \
  void conv2d_forward(const Conv2dShape& s, std::span<const double> input,                     \
                      std::span<const double> kernels, std::span<double> output);              \
  void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,        \
                             std::span<const double> kernels, std::span<double> grad_input);   \
  void conv2d_backward_kernels(const Conv2dShape& s, std::span<const double> grad_output,      \
                               std::span<const double> input, std::span<double> grad_kernels); \
  void max_pool2d_forward(std::size_t channels, std::size_t height, std::size_t width,         \
                          std::span<const double> input, std::span<double> output,             \
                          std::span<std::size_t> argmax);                                      \
  void similarity_forward(std::size_t bins, std::size_t frames_i, std::size_t frames_j,        \
                          std::span<const double> fi, std::span<const double> fj,              \
                          std::span<double> sim, std::span<double> dist);                      \
  void similarity_backward(std::size_t bins, std::size_t frames_i, std::size_t frames_j,       \
                           std::span<const double> fi, std::span<const double> fj,             \
                           std::span<const double> sim, std::span<const double> dist,          \
                           std::span<const double> grad_sim, std::span<double> grad_fi,        \
                           std::span<double> grad_fj);                                         \
  void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,          \
            std::span<double> c);

namespace serial {
FUSIONNET_KERNEL_DECLS
}  // namespace serial

namespace parallel {
FUSIONNET_KERNEL_DECLS
}  // namespace parallel

#undef FUSIONNET_KERNEL_DECLS

}  // namespace fusionnet::kernels

#endif  // FUSIONNET_KERNELS_HPP_
