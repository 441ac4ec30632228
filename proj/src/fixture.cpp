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

#include "fusionnet/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "fusionnet/autodiff.hpp"
#include "fusionnet/error.hpp"

namespace fusionnet::fixture {

namespace {

constexpr std::size_t kClasses = 4;
constexpr std::size_t kBumps = 3;
constexpr double kBumpWidth = 2.5;
constexpr int kNoCue = -1;

std::vector<double> background(std::size_t bins, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.0, static_cast<double>(bins));
  std::vector<double> p(bins, 0.0);
  for (std::size_t k = 0; k < kBumps; ++k) {
    const double c = pos(rng);
    for (std::size_t b = 0; b < bins; ++b) {
      const double z = (static_cast<double>(b) - c) / kBumpWidth;
      p[b] += std::exp(-0.5 * z * z);
    }
  }
  return p;
}

// cue 0: tonal streak (a few bins held for a stretch of frames);
// cue 1: broadband click (most bins for three frames). Both cover the same area.
void add_cue(FeatureMap& fm, int cue, double amplitude, std::mt19937_64& rng) {
  const std::size_t t = fm.n_frames, b = fm.n_bins;
  if (cue == 0) {
    const std::size_t len = std::min<std::size_t>(t / 2, 32);
    const std::size_t f0 = std::uniform_int_distribution<std::size_t>(0, t - len)(rng);
    const std::size_t c = std::uniform_int_distribution<std::size_t>(1, b - 2)(rng);
    for (std::size_t f = f0; f < f0 + len; ++f) {
      for (std::size_t k = c - 1; k <= c + 1; ++k) fm.at(f, k) += amplitude;
    }
  } else {
    const std::size_t f0 = std::uniform_int_distribution<std::size_t>(0, t - 3)(rng);
    const std::size_t span = std::min<std::size_t>(b, 32);
    const std::size_t c0 = std::uniform_int_distribution<std::size_t>(0, b - span)(rng);
    for (std::size_t f = f0; f < f0 + 3; ++f) {
      for (std::size_t k = c0; k < c0 + span; ++k) fm.at(f, k) += amplitude;
    }
  }
}

FeatureMap render(FeatureKind kind, const std::vector<double>& bg, const FixtureOptions& o, int cue,
                  std::mt19937_64& rng) {
  FeatureMap fm;
  fm.kind = kind;
  fm.n_frames = o.frames;
  fm.n_bins = o.bins;
  fm.data.resize(o.frames * o.bins);
  std::normal_distribution<double> noise(0.0, o.noise);
  for (std::size_t f = 0; f < o.frames; ++f) {
    for (std::size_t b = 0; b < o.bins; ++b) fm.at(f, b) = bg[b] + noise(rng);
  }
  if (cue != kNoCue) add_cue(fm, cue, o.cue_amplitude, rng);
  return fm;
}

}  // namespace

ClipDataset make_fixture(const FixtureOptions& o) {
  if (o.n_clips < kClasses || o.frames < 12 || o.bins < 8) throw UsageError("fixture too small");
  ClipDataset data;
  data.vocabulary = {"class0", "class1", "class2", "class3"};
  std::mt19937_64 rng(autodiff::mix_seed(o.seed, 0xf1c7));
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t i = 0; i < o.n_clips; ++i) {
    const std::size_t label = i % kClasses;
    const bool low = label < 2;
    const int own = static_cast<int>(low ? label : label - 2);
    int cue_a = low ? own : coin(rng);
    int cue_b = low ? coin(rng) : own;
    if (o.separable) {
      cue_a = low ? own : kNoCue;
      cue_b = low ? kNoCue : own;
    }
    const auto bg_a = background(o.bins, rng);
    const auto bg_b = low && !o.separable ? bg_a : background(o.bins, rng);
    Clip clip;
    clip.id = "clip" + std::to_string(i);
    clip.channels.push_back(render(FeatureKind::kMel, bg_a, o, cue_a, rng));
    clip.channels.push_back(render(FeatureKind::kLogMel, bg_b, o, cue_b, rng));
    clip.labels = {label};
    clip.split_hint = std::to_string((i / kClasses) % 4 + 1);
    data.clips.push_back(std::move(clip));
  }
  return data;
}

eval::ExperimentSetup experiment_setup(std::uint64_t seed) {
  eval::ExperimentSetup setup;
  setup.segment_length = 64;
  setup.segment_hop = 32;
  setup.train.batch_size = 16;
  setup.train.learning_rate = 0.01;
  setup.train.l2 = 0.0;
  setup.train.dropout = 0.0;
  setup.train.seed = seed;
  return setup;
}

void write_fixture(const ClipDataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::binary);
  if (!manifest) throw DataError("cannot write " + (dir / "manifest.jsonl").string());
  for (const Clip& clip : data.clips) {
    nlohmann::ordered_json entry;
    entry["path"] = clip.id;
    nlohmann::ordered_json labels = nlohmann::ordered_json::array();
    for (std::size_t l : clip.labels) labels.push_back(data.vocabulary.at(l));
    entry["labels"] = labels;
    if (clip.split_hint) entry["split"] = *clip.split_hint;
    nlohmann::ordered_json features = nlohmann::ordered_json::object();
    for (const FeatureMap& fm : clip.channels) {
      const std::string rel = "features/" + clip.id + "." + std::string(to_string(fm.kind)) + ".caf";
      write_feature_map(dir / rel, fm);
      features[std::string(to_string(fm.kind))] = rel;
    }
    entry["features"] = features;
    manifest << entry.dump() << '\n';
  }
}

}  // namespace fusionnet::fixture
