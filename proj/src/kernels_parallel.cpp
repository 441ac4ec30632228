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

#include <algorithm>
#include <cmath>

#include "fusionnet/kernels.hpp"

// Same loop nests as kernels_serial.cpp with the outermost independent loop
// shared across threads. Keep the two files in lockstep.

namespace fusionnet::kernels::parallel {

namespace {
constexpr std::size_t kMinParallelWork = 1 << 14;
}  // namespace

void conv2d_forward(const Conv2dShape& s, std::span<const double> input,
                    std::span<const double> kernels, std::span<double> output) {
  const std::size_t oh_n = s.out_height(), ow_n = s.out_width();
#pragma omp parallel for schedule(static) if (s.out_channels * oh_n * ow_n * s.in_channels > kMinParallelWork)
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    double* out = output.data() + co * oh_n * ow_n;
    std::fill(out, out + oh_n * ow_n, 0.0);
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const double* in = input.data() + ci * s.height * s.width;
      const double* k = kernels.data() + (co * s.in_channels + ci) * s.kernel_h * s.kernel_w;
      for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
        for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
          const double w = k[kh * s.kernel_w + kw];
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            const double* row = in + (oh + kh) * s.width + kw;
            double* orow = out + oh * ow_n;
            for (std::size_t ow = 0; ow < ow_n; ++ow) orow[ow] += w * row[ow];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,
                           std::span<const double> kernels, std::span<double> grad_input) {
  const std::size_t oh_n = s.out_height(), ow_n = s.out_width();
#pragma omp parallel for schedule(static) if (s.out_channels * oh_n * ow_n * s.in_channels > kMinParallelWork)
  for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
    double* gin = grad_input.data() + ci * s.height * s.width;
    for (std::size_t co = 0; co < s.out_channels; ++co) {
      const double* g = grad_output.data() + co * oh_n * ow_n;
      const double* k = kernels.data() + (co * s.in_channels + ci) * s.kernel_h * s.kernel_w;
      for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
        for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
          const double w = k[kh * s.kernel_w + kw];
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            double* row = gin + (oh + kh) * s.width + kw;
            const double* grow = g + oh * ow_n;
            for (std::size_t ow = 0; ow < ow_n; ++ow) row[ow] += w * grow[ow];
          }
        }
      }
    }
  }
}

void conv2d_backward_kernels(const Conv2dShape& s, std::span<const double> grad_output,
                             std::span<const double> input, std::span<double> grad_kernels) {
  const std::size_t oh_n = s.out_height(), ow_n = s.out_width();
#pragma omp parallel for schedule(static) if (s.out_channels * oh_n * ow_n * s.in_channels > kMinParallelWork)
  for (std::size_t co = 0; co < s.out_channels; ++co) {
    const double* g = grad_output.data() + co * oh_n * ow_n;
    for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
      const double* in = input.data() + ci * s.height * s.width;
      double* gk = grad_kernels.data() + (co * s.in_channels + ci) * s.kernel_h * s.kernel_w;
      for (std::size_t kh = 0; kh < s.kernel_h; ++kh) {
        for (std::size_t kw = 0; kw < s.kernel_w; ++kw) {
          double acc = 0.0;
          for (std::size_t oh = 0; oh < oh_n; ++oh) {
            const double* row = in + (oh + kh) * s.width + kw;
            const double* grow = g + oh * ow_n;
            for (std::size_t ow = 0; ow < ow_n; ++ow) acc += grow[ow] * row[ow];
          }
          gk[kh * s.kernel_w + kw] += acc;
        }
      }
    }
  }
}

void max_pool2d_forward(std::size_t channels, std::size_t height, std::size_t width,
                        std::span<const double> input, std::span<double> output,
                        std::span<std::size_t> argmax) {
  const std::size_t oh_n = height / 2, ow_n = width / 2;
#pragma omp parallel for schedule(static) if (channels * height * width > kMinParallelWork)
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oh = 0; oh < oh_n; ++oh) {
      for (std::size_t ow = 0; ow < ow_n; ++ow) {
        std::size_t best = (c * height + 2 * oh) * width + 2 * ow;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t b = 0; b < 2; ++b) {
            const std::size_t idx = (c * height + 2 * oh + a) * width + 2 * ow + b;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh_n + oh) * ow_n + ow;
        output[o] = input[best];
        argmax[o] = best;
      }
    }
  }
}

void similarity_forward(std::size_t bins, std::size_t frames_i, std::size_t frames_j,
                        std::span<const double> fi, std::span<const double> fj,
                        std::span<double> sim, std::span<double> dist) {
#pragma omp parallel for schedule(static) if (frames_i * frames_j * bins > kMinParallelWork)
  for (std::size_t x = 0; x < frames_i; ++x) {
    for (std::size_t y = 0; y < frames_j; ++y) {
      double acc = 0.0;
      for (std::size_t r = 0; r < bins; ++r) {
        const double d = fi[r * frames_i + x] - fj[r * frames_j + y];
        acc += d * d;
      }
      const double norm = std::sqrt(acc);
      dist[x * frames_j + y] = norm;
      sim[x * frames_j + y] = frame_similarity(norm, fi.data() + x, frames_i, fj.data() + y, frames_j, bins);
    }
  }
}

void similarity_backward(std::size_t bins, std::size_t frames_i, std::size_t frames_j,
                         std::span<const double> fi, std::span<const double> fj,
                         std::span<const double> sim, std::span<const double> dist,
                         std::span<const double> grad_sim, std::span<double> grad_fi,
                         std::span<double> grad_fj) {
  // d sim / d a = -sim^2 * (a - b) / |a - b|; zero subgradient at a == b.
  auto coeff = [&](std::size_t x, std::size_t y) {
    const std::size_t e = x * frames_j + y;
    return dist[e] > 0.0 ? -grad_sim[e] * sim[e] * sim[e] / dist[e] : 0.0;
  };
#pragma omp parallel for schedule(static) if (frames_i * frames_j * bins > kMinParallelWork)
  for (std::size_t x = 0; x < frames_i; ++x) {
    for (std::size_t y = 0; y < frames_j; ++y) {
      const double c = coeff(x, y);
      if (c == 0.0) continue;
      for (std::size_t r = 0; r < bins; ++r) {
        grad_fi[r * frames_i + x] += c * (fi[r * frames_i + x] - fj[r * frames_j + y]);
      }
    }
  }
#pragma omp parallel for schedule(static) if (frames_i * frames_j * bins > kMinParallelWork)
  for (std::size_t y = 0; y < frames_j; ++y) {
    for (std::size_t x = 0; x < frames_i; ++x) {
      const double c = coeff(x, y);
      if (c == 0.0) continue;
      for (std::size_t r = 0; r < bins; ++r) {
        grad_fj[r * frames_j + y] -= c * (fi[r * frames_i + x] - fj[r * frames_j + y]);
      }
    }
  }
}

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
#pragma omp parallel for schedule(static) if (s.m * s.n * s.k > kMinParallelWork)
  for (std::size_t i = 0; i < s.m; ++i) {
    double* crow = c.data() + i * s.n;
    if (!s.accumulate) std::fill(crow, crow + s.n, 0.0);
    for (std::size_t p = 0; p < s.k; ++p) {
      const double av = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
      if (av == 0.0) continue;
      if (s.trans_b) {
        for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * b[j * s.k + p];
      } else {
        const double* brow = b.data() + p * s.n;
        for (std::size_t j = 0; j < s.n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace fusionnet::kernels::parallel
