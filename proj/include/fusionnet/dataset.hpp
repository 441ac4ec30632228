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

#ifndef FUSIONNET_DATASET_HPP_
#define FUSIONNET_DATASET_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fusionnet/features.hpp"
#include "fusionnet/training.hpp"

namespace fusionnet {

// A clip after feature extraction: one map per configured channel.
struct Clip {
  std::string id;
  std::vector<FeatureMap> channels;
  std::vector<std::size_t> labels;  // class ids into the vocabulary
  std::optional<std::string> split_hint;
};

struct ClipDataset {
  std::vector<Clip> clips;
  std::vector<std::string> vocabulary;
  // Any clip carrying other than exactly one label makes the task multi-label.
  bool multi_label = false;

  std::size_t n_classes() const { return vocabulary.size(); }
  std::size_t n_channels() const { return clips.empty() ? 0 : clips.front().channels.size(); }
  std::vector<std::size_t> channel_bins() const;
  // Throws DataError when clips disagree on channel count/kinds/bins or labels fall outside the vocabulary.
  void validate() const;
};

std::vector<double> multi_hot(std::span<const std::size_t> labels, std::size_t n_classes);

// One standardizer per channel, fitted on the given clips only.
std::vector<Standardizer> fit_standardizers(const ClipDataset& data, std::span<const std::size_t> clip_ids);

// Standardize, segment, and convert a clip: result[segment][channel].
std::vector<std::vector<autodiff::Tensor>> clip_segments(const Clip& clip, std::span<const Standardizer> norm,
                                                         std::size_t length, std::size_t hop);

std::vector<training::Sample> build_samples(const ClipDataset& data, std::span<const std::size_t> clip_ids,
                                            std::span<const Standardizer> norm, std::size_t length, std::size_t hop);

}  // namespace fusionnet

#endif  // FUSIONNET_DATASET_HPP_
