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

#include "fusionnet/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fusionnet/error.hpp"
#include "fusionnet/kernels.hpp"

namespace fusionnet::fusion {

namespace ad = autodiff;

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kVanilla:
      return "Vanilla";
    case FusionMode::kEarlyFusion:
      return "EF";
    case FusionMode::kLateFusion:
      return "LF";
    case FusionMode::kHybrid:
      return "EF+LF";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "vanilla") return FusionMode::kVanilla;
  if (s == "ef" || s == "early") return FusionMode::kEarlyFusion;
  if (s == "lf" || s == "late") return FusionMode::kLateFusion;
  if (s == "hybrid" || s == "ef+lf") return FusionMode::kHybrid;
  throw UsageError("unknown fusion mode '" + std::string(name) + "' (expected vanilla, ef, lf or hybrid)");
}

ModelScale ModelScale::full(std::size_t n_classes) {
  ModelScale s;
  s.kernels_l1 = 128;
  s.kernels_l2 = 256;
  s.head_depth = 6;
  s.head_width = 600;
  s.n_classes = n_classes;
  return s;
}

double similarity_score(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("similarity_score: vectors of length " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return kernels::frame_similarity(std::sqrt(acc), a.data(), 1, b.data(), 1, a.size());
}

namespace {

// [C x b x t] -> [C*b x t]; matrices pass through.
Tensor frame_columns(const Tensor& f) {
  if (f.rank() == 2) return f;
  if (f.rank() == 3) return ad::reshape(f, {f.dim(0) * f.dim(1), f.dim(2)});
  throw DataError("representative map must be [b x t] or [C x b x t], got " + shape_to_string(f.shape()));
}

std::size_t map_bins(const Tensor& f) { return f.rank() == 3 ? f.dim(1) : f.dim(0); }

}  // namespace

SimilarityMatrix build_similarity_matrix(const Tensor& fi, const Tensor& fj, std::size_t i, std::size_t j) {
  return {ad::similarity_matrix(frame_columns(fi), frame_columns(fj)), {i, j}};
}

std::pair<Tensor, Tensor> attentive_maps(const SimilarityMatrix& s, const AttentionWeights& aw) {
  const std::size_t ti = s.data.dim(0), tj = s.data.dim(1);
  if (aw.w_i.rank() != 2 || aw.w_i.dim(1) != tj || aw.w_j.rank() != 2 || aw.w_j.dim(1) != ti) {
    throw DataError("attentive_maps: W_i " + shape_to_string(aw.w_i.shape()) + " / W_j " +
                    shape_to_string(aw.w_j.shape()) + " do not conform with S " + shape_to_string(s.data.shape()));
  }
  return {ad::matmul(aw.w_i, ad::transpose(s.data)), ad::matmul(aw.w_j, s.data)};
}

std::pair<Tensor, Tensor> early_fuse(const Tensor& fi_r, const Tensor& fj_r, const AttentionWeights& aw) {
  const SimilarityMatrix s = build_similarity_matrix(fi_r, fj_r);
  auto [fi_s, fj_s] = attentive_maps(s, aw);
  if (fi_s.dim(0) != map_bins(fi_r) || fj_s.dim(0) != map_bins(fj_r)) {
    throw DataError("early_fuse: attentive maps have " + std::to_string(fi_s.dim(0)) + "/" +
                    std::to_string(fj_s.dim(0)) + " bins, representatives have " + std::to_string(map_bins(fi_r)) +
                    "/" + std::to_string(map_bins(fj_r)));
  }
  const Tensor left[] = {fi_r, fi_s};
  const Tensor right[] = {fj_r, fj_s};
  return {ad::stack_channels(left), ad::stack_channels(right)};
}

Tensor interaction_score(const Tensor& fi_p, const Tensor& fj_p, const InteractionMatrix& w) {
  const std::size_t d = fi_p.size();
  if (fj_p.size() != d || w.w.rank() != 2 || w.w.dim(0) != d || w.w.dim(1) != d) {
    throw DataError("interaction_score: vectors " + shape_to_string(fi_p.shape()) + ", " +
                    shape_to_string(fj_p.shape()) + " with W " + shape_to_string(w.w.shape()));
  }
  const Tensor row = ad::reshape(fi_p, {1, d});
  const Tensor col = ad::reshape(fj_p, {d, 1});
  return ad::reshape(ad::matmul(row, ad::matmul(w.w, col)), {1});
}

Tensor late_fuse(std::span<const ChannelOutput> outputs, const InteractionMatrix* w) {
  std::vector<Tensor> parts;
  for (const ChannelOutput& o : outputs) parts.push_back(o.pooled);
  if (w != nullptr) {
    if (outputs.size() < 2) throw DataError("late fusion needs at least two channels");
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      for (std::size_t j = i + 1; j < outputs.size(); ++j) {
        parts.push_back(interaction_score(outputs[i].pooled, outputs[j].pooled, *w));
      }
    }
  }
  return ad::concat(parts, 0);
}

Tensor to_input(const FeatureMap& segment) {
  std::vector<double> v(segment.n_frames * segment.n_bins);
  for (std::size_t f = 0; f < segment.n_frames; ++f) {
    for (std::size_t b = 0; b < segment.n_bins; ++b) v[b * segment.n_frames + f] = segment.at(f, b);
  }
  return Tensor::from({segment.n_bins, segment.n_frames}, std::move(v));
}

// ---- model -----------------------------------------------------------------

FusionModel::FusionModel(FusionConfig config) : config_(std::move(config)) {
  const ModelScale& s = config_.scale;
  const std::size_t n = n_channels();
  const std::size_t k = s.kernel_size;
  if (n == 0) throw UsageError("fusion model needs at least one channel");
  if (s.kernels_l1 == 0 || s.kernels_l2 == 0 || s.n_classes == 0 || s.common_bins == 0 || k == 0) {
    throw UsageError("model scale values must be positive");
  }
  if (uses_late_fusion(config_.mode) && n < 2) throw UsageError("late fusion needs at least two channels");
  if (uses_early_fusion(config_.mode) && n < 2) throw UsageError("early fusion needs at least two channels");
  if (!(config_.dropout >= 0.0 && config_.dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");

  auto after_block = [k](std::size_t len) { return len < k ? 0 : (len - k + 1) / 2; };
  h1_ = after_block(s.common_bins);
  w1_ = after_block(config_.frames);
  if (h1_ < k || w1_ < k || (h1_ - k + 1) < 2 || (w1_ - k + 1) < 2) {
    throw UsageError("input of " + std::to_string(s.common_bins) + " bins x " + std::to_string(config_.frames) +
                     " frames is too small for two conv+pool blocks");
  }

  const std::uint64_t seed = config_.seed;
  auto xavier = [&](const std::string& name, ad::Shape shape, std::size_t fan_in, std::size_t fan_out) {
    auto rng = ad::rng_for(seed, name);
    params_.add(name, ad::xavier_uniform(std::move(shape), fan_in, fan_out, rng));
  };

  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t bins = config_.channel_bins[c];
    if (bins == 0) throw UsageError("channel bin counts must be positive");
    if (bins != s.common_bins) {
      xavier("proj.ch" + std::to_string(c), {s.common_bins, bins}, bins, s.common_bins);
    }
  }
  xavier("conv1.kernels", {s.kernels_l1, 1, k, k}, k * k, s.kernels_l1 * k * k);
  xavier("conv2.kernels", {s.kernels_l2, s.kernels_l1, k, k}, s.kernels_l1 * k * k, s.kernels_l2 * k * k);
  if (uses_early_fusion(config_.mode)) {
    xavier("conv2.attn_kernels", {s.kernels_l2, 1, k, k}, k * k, s.kernels_l2 * k * k);
    const std::size_t pairs = config_.share_attention ? 1 : n * (n - 1) / 2;
    for (std::size_t p = 0, i = 0; i < n && p < pairs; ++i) {
      for (std::size_t j = i + 1; j < n && p < pairs; ++j, ++p) {
        const std::string prefix = attention_prefix(i, j);
        xavier(prefix + "W_i", {h1_, w1_}, w1_, h1_);
        xavier(prefix + "W_j", {h1_, w1_}, w1_, h1_);
      }
    }
  }
  const std::size_t d = pooled_dim();
  if (uses_late_fusion(config_.mode)) xavier("interaction.W", {d, d}, d, d);

  std::size_t width = n * d + (uses_late_fusion(config_.mode) ? n * (n - 1) / 2 : 0);
  for (std::size_t l = 0; l < s.head_depth; ++l) {
    const std::string prefix = "head." + std::to_string(l) + ".";
    xavier(prefix + "weights", {s.head_width, width}, width, s.head_width);
    params_.add(prefix + "bias", Tensor::zeros({s.head_width}, true));
    width = s.head_width;
  }
  xavier("head.out.weights", {s.n_classes, width}, width, s.n_classes);
  params_.add("head.out.bias", Tensor::zeros({s.n_classes}, true));
}

std::string FusionModel::attention_prefix(std::size_t i, std::size_t j) const {
  if (config_.share_attention) return "attn.";
  return "attn.p" + std::to_string(i) + "_" + std::to_string(j) + ".";
}

AttentionWeights FusionModel::attention(std::size_t i, std::size_t j) const {
  if (!uses_early_fusion(config_.mode)) throw UsageError("model has no attention weights in this mode");
  const std::string prefix = attention_prefix(std::min(i, j), std::max(i, j));
  return {params_.get(prefix + "W_i"), params_.get(prefix + "W_j"), config_.share_attention};
}

std::optional<InteractionMatrix> FusionModel::interaction() const {
  if (!uses_late_fusion(config_.mode)) return std::nullopt;
  return InteractionMatrix{params_.get("interaction.W")};
}

Tensor FusionModel::layer1(const Tensor& input, std::size_t channel) const {
  const std::size_t bins = config_.channel_bins[channel];
  if (input.rank() != 2 || input.dim(0) != bins || input.dim(1) != config_.frames) {
    throw DataError("channel " + std::to_string(channel) + " expects input [" + std::to_string(bins) + "x" +
                    std::to_string(config_.frames) + "], got " + shape_to_string(input.shape()));
  }
  Tensor x = input;
  const std::string proj = "proj.ch" + std::to_string(channel);
  if (params_.contains(proj)) x = ad::matmul(params_.get(proj), x);
  x = ad::reshape(x, {1, config_.scale.common_bins, config_.frames});
  return ad::max_pool2d(ad::relu(ad::conv2d(x, params_.get("conv1.kernels"))));
}

Tensor FusionModel::conv2_kernels() const {
  if (!uses_early_fusion(config_.mode)) return params_.get("conv2.kernels");
  const Tensor parts[] = {params_.get("conv2.kernels"), params_.get("conv2.attn_kernels")};
  return ad::concat(parts, 1);
}

std::vector<ChannelOutput> FusionModel::channel_outputs(std::span<const Tensor> inputs) const {
  const std::size_t n = n_channels();
  if (inputs.size() != n) {
    throw DataError("model configured for " + std::to_string(n) + " channels, got " + std::to_string(inputs.size()));
  }
  std::vector<Tensor> reps;
  reps.reserve(n);
  for (std::size_t c = 0; c < n; ++c) reps.push_back(layer1(inputs[c], c));

  std::vector<Tensor> conv2_in = reps;
  if (uses_early_fusion(config_.mode)) {
    // Each channel's attentive map is the mean over the pairs it takes part in.
    std::vector<Tensor> attentive(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const SimilarityMatrix s = build_similarity_matrix(reps[i], reps[j], i, j);
        auto [fi_s, fj_s] = attentive_maps(s, attention(i, j));
        attentive[i] = attentive[i].defined() ? ad::add(attentive[i], fi_s) : fi_s;
        attentive[j] = attentive[j].defined() ? ad::add(attentive[j], fj_s) : fj_s;
      }
    }
    for (std::size_t c = 0; c < n; ++c) {
      const Tensor avg = n > 2 ? ad::scale(attentive[c], 1.0 / static_cast<double>(n - 1)) : attentive[c];
      const Tensor stacked[] = {reps[c], avg};
      conv2_in[c] = ad::stack_channels(stacked);
    }
  }

  const Tensor k2 = conv2_kernels();
  std::vector<ChannelOutput> out;
  out.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    const Tensor r2 = ad::max_pool2d(ad::relu(ad::conv2d(conv2_in[c], k2)));
    const Tensor pooled[] = {ad::global_avg_pool(reps[c]), ad::global_avg_pool(r2)};
    out.push_back({reps[c], ad::concat(pooled, 0), c});
  }
  return out;
}

Tensor FusionModel::forward(std::span<const Tensor> inputs, bool train, std::uint64_t dropout_seed) const {
  const auto outputs = channel_outputs(inputs);
  const auto w = interaction();
  Tensor h = late_fuse(outputs, w ? &*w : nullptr);
  const double keep = 1.0 - config_.dropout;
  for (std::size_t l = 0; l < config_.scale.head_depth; ++l) {
    const std::string prefix = "head." + std::to_string(l) + ".";
    h = ad::relu(ad::dense(h, params_.get(prefix + "weights"), params_.get(prefix + "bias")));
    h = ad::dropout(h, keep, ad::mix_seed(dropout_seed, l), train);
  }
  return ad::sigmoid(ad::dense(h, params_.get("head.out.weights"), params_.get("head.out.bias")));
}

void FusionModel::load(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  auto& entries = params_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, current] = entries[i];
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
    if (it == tensors.end()) throw DataError("checkpoint is missing tensor " + name);
    if (it->second.shape() != current.shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_to_string(it->second.shape()) +
                      ", model expects " + shape_to_string(current.shape()));
    }
  }
  for (const auto& [name, _] : tensors) {
    if (!params_.contains(name)) throw DataError("checkpoint has unexpected tensor " + name);
  }
  for (auto& [name, current] : entries) {
    auto it = std::find_if(tensors.begin(), tensors.end(), [&](const auto& t) { return t.first == name; });
    std::copy(it->second.values().begin(), it->second.values().end(), current.mutable_values().begin());
  }
}

}  // namespace fusionnet::fusion
