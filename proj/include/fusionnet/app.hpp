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

#ifndef FUSIONNET_APP_HPP_
#define FUSIONNET_APP_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fusionnet/dataset.hpp"
#include "fusionnet/eval.hpp"
#include "fusionnet/features.hpp"
#include "fusionnet/fusion.hpp"
#include "fusionnet/training.hpp"

// Operator surface behind the command-line tool. Every function throws
// fusionnet::Error subclasses; the exit code is the error's code().
namespace fusionnet::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// One JSON object per line:
//   {"path": "a.wav", "labels": ["bus"], "split": "1", "features": {"Mel": "a.mel.caf"}}
// "split" and "features" are optional. Relative paths resolve against the
// manifest's directory. A "features" entry supplies a precomputed CAF1 map for
// that kind and bypasses extraction.
struct ManifestEntry {
  fs::path path;
  std::vector<std::string> labels;
  std::optional<std::string> split;
  std::map<FeatureKind, fs::path> features;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
};

Manifest parse_manifest(std::istream& in, const fs::path& base_dir);
Manifest read_manifest(const fs::path& path);

struct ExperimentConfig {
  std::vector<FeatureKind> channels{FeatureKind::kMel, FeatureKind::kLogMel, FeatureKind::kMfcc, FeatureKind::kCqt};
  fusion::FusionMode mode = fusion::FusionMode::kHybrid;
  fusion::ModelScale scale;
  training::TrainConfig train;
  eval::SplitScheme split = eval::SplitScheme::kDevEval;
  std::size_t folds = 0;  // 0: the scheme's default
  double train_fraction = 0.8;
  std::optional<std::string> drop_label = "others";
  std::uint64_t seed = 0;
  bool share_attention = true;
  std::size_t segment_length = 64;
  std::size_t segment_hop = 32;
  // Label vocabulary; filled from the manifest when empty.
  std::vector<std::string> labels;

  void validate() const;
  eval::ExperimentSetup setup(std::size_t jobs) const;
};

// Unknown keys are a UsageError so that typos do not silently fall back to defaults.
ExperimentConfig config_from_json(const json& j, ExperimentConfig base = {});
json config_to_json(const ExperimentConfig& cfg);
// Defaults, then the file (if any), then `overrides`.
ExperimentConfig resolve_config(const std::optional<fs::path>& file, const json& overrides);
// Scale, segment length and hop of the full-size architecture.
void apply_full_scale(ExperimentConfig& cfg);

std::uint64_t content_hash(std::span<const std::uint8_t> bytes);
// FUSIONNET_CACHE when set, else ".fusionnet-cache" under the working directory.
fs::path default_cache_dir();
fs::path cache_path(const fs::path& cache_dir, std::span<const std::uint8_t> wav_bytes, FeatureKind kind);

struct ExtractStats {
  std::size_t written = 0;
  std::size_t skipped = 0;
  std::vector<std::string> failures;  // "path: reason"
};

// One CAF1 file per (clip, kind); existing entries are left untouched.
ExtractStats cmd_extract(const Manifest& manifest, const std::vector<FeatureKind>& kinds, const fs::path& cache_dir,
                         std::size_t jobs);

// Loads (extracting on a cache miss) the configured channels of every entry.
// Resolves cfg.labels and cfg.scale.n_classes against the manifest.
ClipDataset load_dataset(const Manifest& manifest, ExperimentConfig& cfg, const fs::path& cache_dir,
                         std::size_t jobs);

// Writes checkpoint.fusn, curves.csv and config.json into out_dir.
void cmd_train(ExperimentConfig cfg, const Manifest& manifest, const fs::path& out_dir, const fs::path& cache_dir,
               std::size_t jobs);

// Writes the clip-level metrics of every manifest entry as report CSV.
void cmd_eval(ExperimentConfig cfg, const fs::path& checkpoint, const Manifest& manifest, const fs::path& out_csv,
              const fs::path& cache_dir, std::size_t jobs);

// Writes folds.json, report.csv, table.csv, table.txt and config.json into out_dir.
void cmd_ablate(ExperimentConfig cfg, const Manifest& manifest, const fs::path& out_dir, const fs::path& cache_dir,
                std::size_t jobs);

// Returns the exit code: 0 when every group passes, 3 otherwise.
int cmd_gradcheck(std::ostream& out, std::uint64_t seed);

// The synthetic two-view fixture with a matching config.json.
void cmd_fixture(const fs::path& out_dir, std::uint64_t seed, std::size_t n_clips, bool separable = false);

}  // namespace fusionnet::app

#endif  // FUSIONNET_APP_HPP_
