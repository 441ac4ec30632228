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

#include "fusionnet/dataset.hpp"

#include <algorithm>

#include "fusionnet/error.hpp"
#include "fusionnet/fusion.hpp"

namespace fusionnet {

std::vector<std::size_t> ClipDataset::channel_bins() const {
  std::vector<std::size_t> bins;
  if (clips.empty()) return bins;
  for (const FeatureMap& fm : clips.front().channels) bins.push_back(fm.n_bins);
  return bins;
}

void ClipDataset::validate() const {
  if (clips.empty()) throw DataError("dataset has no clips");
  const Clip& first = clips.front();
  if (first.channels.empty()) throw DataError("clip " + first.id + " has no feature channels");
  for (const Clip& c : clips) {
    if (c.channels.size() != first.channels.size()) throw DataError("clip " + c.id + " has a different channel count");
    for (std::size_t k = 0; k < c.channels.size(); ++k) {
      if (c.channels[k].kind != first.channels[k].kind || c.channels[k].n_bins != first.channels[k].n_bins) {
        throw DataError("clip " + c.id + " channel " + std::to_string(k) + " disagrees in kind or bin count");
      }
    }
    for (std::size_t l : c.labels) {
      if (l >= vocabulary.size()) throw DataError("clip " + c.id + " has a label outside the vocabulary");
    }
  }
}

std::vector<double> multi_hot(std::span<const std::size_t> labels, std::size_t n_classes) {
  std::vector<double> t(n_classes, 0.0);
  for (std::size_t l : labels) t.at(l) = 1.0;
  return t;
}

std::vector<Standardizer> fit_standardizers(const ClipDataset& data, std::span<const std::size_t> clip_ids) {
  std::vector<Standardizer> out;
  for (std::size_t k = 0; k < data.n_channels(); ++k) {
    std::vector<const FeatureMap*> maps;
    for (std::size_t id : clip_ids) maps.push_back(&data.clips.at(id).channels[k]);
    out.push_back(Standardizer::fit(maps));
  }
  return out;
}

std::vector<std::vector<autodiff::Tensor>> clip_segments(const Clip& clip, std::span<const Standardizer> norm,
                                                         std::size_t length, std::size_t hop) {
  if (norm.size() != clip.channels.size()) throw DataError("standardizer count does not match channels");
  std::vector<SegmentSet> sets;
  for (std::size_t k = 0; k < clip.channels.size(); ++k) {
    sets.push_back(segment(norm[k].apply(clip.channels[k]), length, hop, clip.id));
  }
  // Channels can differ in frame count (CQT frames are fewer); keep the common prefix.
  std::size_t count = sets.front().segments.size();
  for (const auto& s : sets) count = std::min(count, s.segments.size());
  std::vector<std::vector<autodiff::Tensor>> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (const auto& s : sets) out[i].push_back(fusion::to_input(s.segments[i]));
  }
  return out;
}

std::vector<training::Sample> build_samples(const ClipDataset& data, std::span<const std::size_t> clip_ids,
                                            std::span<const Standardizer> norm, std::size_t length, std::size_t hop) {
  std::vector<training::Sample> samples;
  for (std::size_t id : clip_ids) {
    const Clip& clip = data.clips.at(id);
    const auto target = multi_hot(clip.labels, data.n_classes());
    for (auto& inputs : clip_segments(clip, norm, length, hop)) samples.push_back({std::move(inputs), target});
  }
  return samples;
}

}  // namespace fusionnet
