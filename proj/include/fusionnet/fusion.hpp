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

#ifndef FUSIONNET_FUSION_HPP_
#define FUSIONNET_FUSION_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/features.hpp"

namespace fusionnet::fusion {

using autodiff::Tensor;

enum class FusionMode { kVanilla, kEarlyFusion, kLateFusion, kHybrid };

inline constexpr FusionMode kAllModes[] = {FusionMode::kVanilla, FusionMode::kEarlyFusion, FusionMode::kLateFusion,
                                           FusionMode::kHybrid};

// Table-style labels: "Vanilla", "EF", "LF", "EF+LF".
std::string_view to_string(FusionMode mode);
// Accepts the labels above plus "vanilla", "ef", "lf", "hybrid" in any case.
FusionMode parse_fusion_mode(std::string_view name);
inline bool uses_early_fusion(FusionMode m) { return m == FusionMode::kEarlyFusion || m == FusionMode::kHybrid; }
inline bool uses_late_fusion(FusionMode m) { return m == FusionMode::kLateFusion || m == FusionMode::kHybrid; }

struct ModelScale {
  std::size_t kernels_l1 = 8;
  std::size_t kernels_l2 = 16;
  std::size_t head_depth = 2;
  std::size_t head_width = 32;
  std::size_t n_classes = 4;
  // Every channel is projected to this many bins before the shared conv stack.
  std::size_t common_bins = 40;
  std::size_t kernel_size = 3;

  // Conv sizes from the architecture narrative and the fusion-layer table.
  static ModelScale full(std::size_t n_classes);
};

struct FusionConfig {
  // Input bin count of each channel (one channel per feature kind).
  std::vector<std::size_t> channel_bins;
  // Frames per input segment.
  std::size_t frames = 64;
  ModelScale scale;
  FusionMode mode = FusionMode::kHybrid;
  bool share_attention = true;
  // Drop probability on the dense head.
  double dropout = 0.3;
  std::uint64_t seed = 0;
};

struct ChannelOutput {
  Tensor representative;  // F^r: pooled layer-1 maps [C1 x H1 x W1]
  Tensor pooled;          // F^p: [GAP(layer 1) ; GAP(layer 2)], length C1 + C2
  std::size_t channel_index = 0;
};

struct SimilarityMatrix {
  Tensor data;  // [t_i x t_j]
  std::pair<std::size_t, std::size_t> pair{0, 1};
};

struct AttentionWeights {
  Tensor w_i;  // [b x t_j]
  Tensor w_j;  // [b x t_i]
  bool shared = true;
};

struct InteractionMatrix {
  Tensor w;  // [d x d]
};

// 1 / (1 + ||a - b||_2)
double similarity_score(std::span<const double> a, std::span<const double> b);

// Entry (x, y) compares frame (column) x of fi with frame y of fj. Representatives
// of rank 3 [C x b x t] are compared on their flattened (C*b)-long frame columns.
SimilarityMatrix build_similarity_matrix(const Tensor& fi, const Tensor& fj, std::size_t i = 0, std::size_t j = 1);

// (W_i * S^T, W_j * S)
std::pair<Tensor, Tensor> attentive_maps(const SimilarityMatrix& s, const AttentionWeights& aw);

// Representative map(s) followed by the attentive map along the channel axis:
// [b x t] inputs give [2 x b x t]; [C x b x t] inputs give [(C+1) x b x t].
std::pair<Tensor, Tensor> early_fuse(const Tensor& fi_r, const Tensor& fj_r, const AttentionWeights& aw);

// (F_i^p)^T W F_j^p as a [1] tensor.
Tensor interaction_score(const Tensor& fi_p, const Tensor& fj_p, const InteractionMatrix& w);

// Pooled vectors of every channel, then (when `w` is given) one interaction
// score per unordered pair i < j: length N*d + N(N-1)/2.
Tensor late_fuse(std::span<const ChannelOutput> outputs, const InteractionMatrix* w);

// Segment [n_frames x n_bins] -> input tensor [n_bins x n_frames].
Tensor to_input(const FeatureMap& segment);

class FusionModel {
 public:
  explicit FusionModel(FusionConfig config);

  const FusionConfig& config() const { return config_; }
  std::size_t n_channels() const { return config_.channel_bins.size(); }
  autodiff::ParameterStore& parameters() { return params_; }
  const autodiff::ParameterStore& parameters() const { return params_; }
  std::size_t pooled_dim() const { return config_.scale.kernels_l1 + config_.scale.kernels_l2; }

  // One [b_k x frames] tensor per channel. Returns per-class probabilities.
  Tensor forward(std::span<const Tensor> inputs, bool train, std::uint64_t dropout_seed = 0) const;

  // Per-channel outputs before the head, for inspection and tests.
  std::vector<ChannelOutput> channel_outputs(std::span<const Tensor> inputs) const;

  AttentionWeights attention(std::size_t i, std::size_t j) const;
  std::optional<InteractionMatrix> interaction() const;

  // Replaces parameter values; names and shapes must match exactly.
  // Throws DataError naming the first mismatched tensor.
  void load(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  Tensor layer1(const Tensor& input, std::size_t channel) const;
  Tensor conv2_kernels() const;
  std::string attention_prefix(std::size_t i, std::size_t j) const;

  FusionConfig config_;
  autodiff::ParameterStore params_;
  std::size_t h1_ = 0;
  std::size_t w1_ = 0;
};

}  // namespace fusionnet::fusion

#endif  // FUSIONNET_FUSION_HPP_
