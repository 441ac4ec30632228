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

#include "fusionnet/app.hpp"

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

#include "fusionnet/audio.hpp"
#include "fusionnet/error.hpp"
#include "fusionnet/fixture.hpp"
#include "fusionnet/gradcheck.hpp"

namespace fusionnet::app {

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Write to a sibling temporary and rename, so readers never see a partial file.
void write_file(const fs::path& path, std::string_view contents, const std::string& tmp_tag = "tmp") {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + "." + tmp_tag;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

FeatureKind kind_from_json(const json& v) { return parse_feature_kind(v.get<std::string>()); }

}  // namespace

// ---- manifest ----------------------------------------------------------------

Manifest parse_manifest(std::istream& in, const fs::path& base_dir) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "manifest line " + std::to_string(line_no) + ": ";
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw DataError(where + "expected a JSON object");
      ManifestEntry e;
      if (!j.contains("path") || !j["path"].is_string()) throw DataError(where + "missing string field \"path\"");
      e.path = resolve(j["path"].get<std::string>());
      if (!j.contains("labels") || !j["labels"].is_array()) throw DataError(where + "missing array field \"labels\"");
      for (const auto& l : j["labels"]) e.labels.push_back(l.get<std::string>());
      if (j.contains("split") && !j["split"].is_null()) {
        e.split = j["split"].is_string() ? j["split"].get<std::string>() : j["split"].dump();
      }
      if (j.contains("features")) {
        for (const auto& [kind, path] : j["features"].items()) {
          e.features[parse_feature_kind(kind)] = resolve(path.get<std::string>());
        }
      }
      for (const auto& [key, _] : j.items()) {
        if (key != "path" && key != "labels" && key != "split" && key != "features") {
          throw DataError(where + "unknown field \"" + key + "\"");
        }
      }
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(where + ex.what());
    } catch (const UsageError& ex) {
      throw DataError(where + ex.what());
    }
  }
  if (m.entries.empty()) throw DataError("manifest has no entries");
  return m;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  return parse_manifest(in, path.parent_path());
}

// ---- config ------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (channels.empty()) throw UsageError("at least one channel is required");
  const std::set<FeatureKind> unique(channels.begin(), channels.end());
  if (unique.size() != channels.size()) throw UsageError("channels must be distinct");
  if (scale.kernels_l1 == 0 || scale.kernels_l2 == 0 || scale.head_width == 0 || scale.common_bins == 0 ||
      scale.kernel_size == 0) {
    throw UsageError("model scale values must be positive");
  }
  if (segment_length == 0 || segment_hop == 0) throw UsageError("segment length and hop must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw UsageError("train fraction must be in (0, 1)");
  train.validate();
}

eval::ExperimentSetup ExperimentConfig::setup(std::size_t jobs) const {
  eval::ExperimentSetup s;
  s.scale = scale;
  s.train = train;
  s.train.seed = seed;
  s.segment_length = segment_length;
  s.segment_hop = segment_hop;
  s.share_attention = share_attention;
  s.jobs = jobs;
  return s;
}

namespace {

[[noreturn]] void unknown_key(const std::string& where, const std::string& key) {
  throw UsageError("unknown config key \"" + where + key + "\"");
}

}  // namespace

ExperimentConfig config_from_json(const json& j, ExperimentConfig cfg) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "channels") {
        cfg.channels.clear();
        for (const auto& k : v) cfg.channels.push_back(kind_from_json(k));
      } else if (key == "mode") {
        cfg.mode = fusion::parse_fusion_mode(v.get<std::string>());
      } else if (key == "share_attention") {
        cfg.share_attention = v.get<bool>();
      } else if (key == "scale") {
        for (const auto& [k, x] : v.items()) {
          if (k == "kernels_l1") cfg.scale.kernels_l1 = x.get<std::size_t>();
          else if (k == "kernels_l2") cfg.scale.kernels_l2 = x.get<std::size_t>();
          else if (k == "head_depth") cfg.scale.head_depth = x.get<std::size_t>();
          else if (k == "head_width") cfg.scale.head_width = x.get<std::size_t>();
          else if (k == "n_classes") cfg.scale.n_classes = x.get<std::size_t>();
          else if (k == "common_bins") cfg.scale.common_bins = x.get<std::size_t>();
          else if (k == "kernel_size") cfg.scale.kernel_size = x.get<std::size_t>();
          else unknown_key("scale.", k);
        }
      } else if (key == "segment_length") {
        cfg.segment_length = v.get<std::size_t>();
      } else if (key == "segment_hop") {
        cfg.segment_hop = v.get<std::size_t>();
      } else if (key == "train") {
        for (const auto& [k, x] : v.items()) {
          if (k == "learning_rate") cfg.train.learning_rate = x.get<double>();
          else if (k == "batch_size") cfg.train.batch_size = x.get<std::size_t>();
          else if (k == "epochs") cfg.train.epochs = x.get<std::size_t>();
          else if (k == "l2") cfg.train.l2 = x.get<double>();
          else if (k == "dropout") cfg.train.dropout = x.get<double>();
          else unknown_key("train.", k);
        }
      } else if (key == "split") {
        for (const auto& [k, x] : v.items()) {
          if (k == "scheme") cfg.split = eval::parse_split_scheme(x.get<std::string>());
          else if (k == "folds") cfg.folds = x.get<std::size_t>();
          else if (k == "train_fraction") cfg.train_fraction = x.get<double>();
          else unknown_key("split.", k);
        }
      } else if (key == "drop_label") {
        cfg.drop_label = v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
      } else if (key == "seed") {
        cfg.seed = v.get<std::uint64_t>();
      } else if (key == "labels") {
        cfg.labels = v.get<std::vector<std::string>>();
      } else {
        unknown_key("", key);
      }
    }
  } catch (const json::exception& ex) {
    throw UsageError(std::string("config: ") + ex.what());
  }
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["channels"] = json::array();
  for (FeatureKind k : cfg.channels) j["channels"].push_back(std::string(to_string(k)));
  j["mode"] = std::string(fusion::to_string(cfg.mode));
  j["share_attention"] = cfg.share_attention;
  j["scale"] = {{"kernels_l1", cfg.scale.kernels_l1}, {"kernels_l2", cfg.scale.kernels_l2},
                {"head_depth", cfg.scale.head_depth}, {"head_width", cfg.scale.head_width},
                {"n_classes", cfg.scale.n_classes},   {"common_bins", cfg.scale.common_bins},
                {"kernel_size", cfg.scale.kernel_size}};
  j["segment_length"] = cfg.segment_length;
  j["segment_hop"] = cfg.segment_hop;
  j["train"] = {{"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"l2", cfg.train.l2},
                {"dropout", cfg.train.dropout}};
  j["split"] = {{"scheme", std::string(eval::to_string(cfg.split))},
                {"folds", cfg.folds},
                {"train_fraction", cfg.train_fraction}};
  j["drop_label"] = cfg.drop_label ? json(*cfg.drop_label) : json(nullptr);
  j["seed"] = cfg.seed;
  j["labels"] = cfg.labels;
  return j;
}

ExperimentConfig resolve_config(const std::optional<fs::path>& file, const json& overrides) {
  ExperimentConfig cfg;
  if (file) {
    std::ifstream in(*file, std::ios::binary);
    if (!in) throw UsageError("cannot open config " + file->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& ex) {
      throw UsageError("config " + file->string() + ": " + ex.what());
    }
    cfg = config_from_json(j, cfg);
  }
  if (!overrides.is_null()) cfg = config_from_json(overrides, cfg);
  cfg.validate();
  return cfg;
}

void apply_full_scale(ExperimentConfig& cfg) {
  cfg.scale = fusion::ModelScale::full(cfg.scale.n_classes);
  cfg.segment_length = 1024;
  cfg.segment_hop = 512;
}

// ---- feature cache -----------------------------------------------------------

std::uint64_t content_hash(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

fs::path default_cache_dir() {
  if (const char* env = std::getenv("FUSIONNET_CACHE"); env != nullptr && *env != '\0') return env;
  return ".fusionnet-cache";
}

fs::path cache_path(const fs::path& cache_dir, std::span<const std::uint8_t> wav_bytes, FeatureKind kind) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(content_hash(wav_bytes)));
  return cache_dir / (std::string(hex) + "." + std::string(to_string(kind)) + ".caf");
}

namespace {

// Returns true when a file was written.
bool ensure_cached(const fs::path& path, const std::vector<std::uint8_t>& wav, FeatureKind kind,
                   std::optional<AudioClip>& clip, const std::string& tmp_tag) {
  if (fs::exists(path)) return false;
  if (!clip) clip = decode_wav(wav);
  const auto bytes = encode_feature_map(extract_features(*clip, kind));
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), tmp_tag);
  return true;
}

std::string tmp_tag_for(std::size_t entry) { return "tmp" + std::to_string(entry); }

// Runs body(i) for i in [0, n) on up to `jobs` threads; collects the failure messages in index order.
template <typename Body>
std::vector<std::string> for_each_entry(std::size_t n, std::size_t jobs, Body body) {
  std::vector<std::string> errors(n);
  const int threads = static_cast<int>(std::max<std::size_t>(1, jobs));
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (const std::exception& ex) {
      errors[i] = ex.what();
      if (errors[i].empty()) errors[i] = "unknown error";
    }
  }
  return errors;
}

}  // namespace

ExtractStats cmd_extract(const Manifest& manifest, const std::vector<FeatureKind>& kinds, const fs::path& cache_dir,
                         std::size_t jobs) {
  if (kinds.empty()) throw UsageError("no feature kinds requested");
  fs::create_directories(cache_dir);
  const std::size_t n = manifest.entries.size();
  std::vector<std::size_t> written(n, 0), skipped(n, 0);
  const auto errors = for_each_entry(n, jobs, [&](std::size_t i) {
    const ManifestEntry& e = manifest.entries[i];
    std::vector<std::uint8_t> wav;
    std::optional<AudioClip> clip;
    for (FeatureKind kind : kinds) {
      if (e.features.count(kind)) {
        ++skipped[i];
        continue;
      }
      if (wav.empty()) wav = read_bytes(e.path);
      if (ensure_cached(cache_path(cache_dir, wav, kind), wav, kind, clip, tmp_tag_for(i))) {
        ++written[i];
      } else {
        ++skipped[i];
      }
    }
  });
  ExtractStats stats;
  for (std::size_t i = 0; i < n; ++i) {
    stats.written += written[i];
    stats.skipped += skipped[i];
    if (!errors[i].empty()) stats.failures.push_back(manifest.entries[i].path.string() + ": " + errors[i]);
  }
  return stats;
}

ClipDataset load_dataset(const Manifest& manifest, ExperimentConfig& cfg, const fs::path& cache_dir,
                         std::size_t jobs) {
  cfg.validate();
  if (cfg.mode != fusion::FusionMode::kVanilla && cfg.channels.size() < 2) {
    throw UsageError(std::string(fusion::to_string(cfg.mode)) + " mode needs at least two channels");
  }
  ClipDataset data;
  data.multi_label = std::any_of(manifest.entries.begin(), manifest.entries.end(),
                                 [](const ManifestEntry& e) { return e.labels.size() != 1; });

  // Label filtering happens before any extraction so inconsistencies fail fast.
  std::vector<std::size_t> kept;
  std::vector<std::vector<std::string>> labels;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    std::vector<std::string> l = manifest.entries[i].labels;
    if (cfg.drop_label) l.erase(std::remove(l.begin(), l.end(), *cfg.drop_label), l.end());
    if (!data.multi_label && l.empty()) continue;
    kept.push_back(i);
    labels.push_back(std::move(l));
  }
  if (kept.empty()) throw DataError("no manifest entries left after dropping label '" + cfg.drop_label.value_or("") + "'");
  if (cfg.labels.empty()) {
    std::set<std::string> vocab;
    for (const auto& l : labels) vocab.insert(l.begin(), l.end());
    cfg.labels.assign(vocab.begin(), vocab.end());
  }
  if (cfg.labels.empty()) throw DataError("manifest defines no labels");
  data.vocabulary = cfg.labels;
  cfg.scale.n_classes = data.vocabulary.size();

  data.clips.resize(kept.size());
  for (std::size_t c = 0; c < kept.size(); ++c) {
    const ManifestEntry& e = manifest.entries[kept[c]];
    Clip& clip = data.clips[c];
    clip.id = e.path.string();
    clip.split_hint = e.split;
    for (const std::string& l : labels[c]) {
      const auto it = std::find(data.vocabulary.begin(), data.vocabulary.end(), l);
      if (it == data.vocabulary.end()) throw DataError("clip " + clip.id + " has unknown label '" + l + "'");
      clip.labels.push_back(static_cast<std::size_t>(it - data.vocabulary.begin()));
    }
    std::sort(clip.labels.begin(), clip.labels.end());
    clip.labels.erase(std::unique(clip.labels.begin(), clip.labels.end()), clip.labels.end());
  }

  const auto errors = for_each_entry(kept.size(), jobs, [&](std::size_t c) {
    const ManifestEntry& e = manifest.entries[kept[c]];
    std::vector<std::uint8_t> wav;
    std::optional<AudioClip> clip;
    for (FeatureKind kind : cfg.channels) {
      FeatureMap fm;
      if (const auto it = e.features.find(kind); it != e.features.end()) {
        fm = read_feature_map(it->second);
      } else {
        if (wav.empty()) wav = read_bytes(e.path);
        const fs::path path = cache_path(cache_dir, wav, kind);
        ensure_cached(path, wav, kind, clip, tmp_tag_for(c));
        fm = read_feature_map(path);
      }
      if (fm.kind != kind) {
        throw DataError("feature file for " + std::string(to_string(kind)) + " holds " + std::string(to_string(fm.kind)));
      }
      data.clips[c].channels.push_back(std::move(fm));
    }
  });
  for (std::size_t c = 0; c < kept.size(); ++c) {
    if (!errors[c].empty()) throw DataError(manifest.entries[kept[c]].path.string() + ": " + errors[c]);
  }
  data.validate();
  return data;
}

// ---- subcommands -------------------------------------------------------------

namespace {

std::string norm_name(const char* what, std::size_t k) { return std::string("norm.") + what + ".ch" + std::to_string(k); }

std::vector<std::size_t> all_ids(const ClipDataset& data) {
  std::vector<std::size_t> ids(data.clips.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return ids;
}

}  // namespace

void cmd_train(ExperimentConfig cfg, const Manifest& manifest, const fs::path& out_dir, const fs::path& cache_dir,
               std::size_t jobs) {
  const ClipDataset data = load_dataset(manifest, cfg, cache_dir, jobs);
  const eval::ExperimentSetup setup = cfg.setup(jobs);
  const auto ids = all_ids(data);
  const auto norm = fit_standardizers(data, ids);
  const auto samples = build_samples(data, ids, norm, setup.segment_length, setup.segment_hop);
  fusion::FusionModel model(eval::model_config(data, setup, cfg.mode));
  const auto curve = training::train(model, samples, setup.train);

  auto tensors = model.parameters().entries();
  for (std::size_t k = 0; k < norm.size(); ++k) {
    const std::size_t b = norm[k].mean().size();
    tensors.emplace_back(norm_name("mean", k), autodiff::Tensor::from({b}, norm[k].mean()));
    tensors.emplace_back(norm_name("std", k), autodiff::Tensor::from({b}, norm[k].stddev()));
  }
  fs::create_directories(out_dir);
  const auto bytes = autodiff::encode_checkpoint(tensors);
  write_file(out_dir / "checkpoint.fusn", std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::ostringstream csv;
  training::write_curve_csv(csv, curve);
  write_file(out_dir / "curves.csv", csv.str());
  write_json(out_dir / "config.json", config_to_json(cfg));
}

void cmd_eval(ExperimentConfig cfg, const fs::path& checkpoint, const Manifest& manifest, const fs::path& out_csv,
              const fs::path& cache_dir, std::size_t jobs) {
  auto tensors = autodiff::load_checkpoint(checkpoint);
  const ClipDataset data = load_dataset(manifest, cfg, cache_dir, jobs);
  const eval::ExperimentSetup setup = cfg.setup(jobs);

  std::vector<Standardizer> norm;
  for (std::size_t k = 0; k < data.n_channels(); ++k) {
    auto find = [&](const std::string& name) -> const autodiff::Tensor& {
      for (const auto& [n, t] : tensors) {
        if (n == name) return t;
      }
      throw DataError("checkpoint is missing tensor " + name);
    };
    const auto& mean = find(norm_name("mean", k));
    const auto& stddev = find(norm_name("std", k));
    if (mean.size() != data.channel_bins()[k] || stddev.size() != mean.size()) {
      throw DataError("checkpoint tensor " + norm_name("mean", k) + " has " + std::to_string(mean.size()) +
                      " bins, channel has " + std::to_string(data.channel_bins()[k]));
    }
    norm.emplace_back(std::vector<double>(mean.values().begin(), mean.values().end()),
                      std::vector<double>(stddev.values().begin(), stddev.values().end()));
  }
  std::erase_if(tensors, [](const auto& t) { return t.first.starts_with("norm."); });

  fusion::FusionModel model(eval::model_config(data, setup, cfg.mode));
  model.load(tensors);
  eval::EvalReport report;
  report.mode = cfg.mode;
  for (const auto& [name, value] : eval::evaluate(model, data, all_ids(data), norm, setup)) {
    report.metrics.push_back({name, name != "eer", {value}});
  }
  std::ostringstream csv;
  eval::write_report_csv(csv, std::span<const eval::EvalReport>(&report, 1));
  write_file(out_csv, csv.str());
}

void cmd_ablate(ExperimentConfig cfg, const Manifest& manifest, const fs::path& out_dir, const fs::path& cache_dir,
                std::size_t jobs) {
  if (cfg.channels.size() < 2) throw UsageError("the ablation needs at least two channels");
  const ClipDataset data = load_dataset(manifest, cfg, cache_dir, jobs);
  std::vector<std::optional<std::string>> hints;
  for (const Clip& c : data.clips) hints.push_back(c.split_hint);
  const eval::SplitPlan plan =
      eval::make_split_plan(cfg.split, data.clips.size(), cfg.seed, hints, cfg.folds, cfg.train_fraction);
  fs::create_directories(out_dir);
  std::ostringstream folds;
  eval::write_split_plan(folds, plan);
  write_file(out_dir / "folds.json", folds.str());
  write_json(out_dir / "config.json", config_to_json(cfg));

  const auto reports = eval::run_ablation(data, plan, cfg.setup(jobs));
  std::ostringstream report, table_csv, table_txt;
  eval::write_report_csv(report, reports);
  eval::write_table_csv(table_csv, reports);
  eval::write_table_text(table_txt, reports);
  write_file(out_dir / "report.csv", report.str());
  write_file(out_dir / "table.csv", table_csv.str());
  write_file(out_dir / "table.txt", table_txt.str());
}

int cmd_gradcheck(std::ostream& out, std::uint64_t seed) {
  const gradcheck::Report report = gradcheck::run(seed);
  gradcheck::write_report(out, report);
  return report.passed() ? 0 : static_cast<int>(ExitCode::kNumerical);
}

void cmd_fixture(const fs::path& out_dir, std::uint64_t seed, std::size_t n_clips, bool separable) {
  fixture::FixtureOptions opts;
  opts.seed = seed;
  opts.n_clips = n_clips;
  opts.separable = separable;
  const ClipDataset data = fixture::make_fixture(opts);
  fixture::write_fixture(data, out_dir);

  const eval::ExperimentSetup setup = fixture::experiment_setup(seed);
  ExperimentConfig cfg;
  cfg.channels.clear();
  for (const FeatureMap& fm : data.clips.front().channels) cfg.channels.push_back(fm.kind);
  cfg.scale.n_classes = data.n_classes();
  cfg.train = setup.train;
  cfg.segment_length = setup.segment_length;
  cfg.segment_hop = setup.segment_hop;
  cfg.split = eval::SplitScheme::kProvidedFolds;
  cfg.drop_label.reset();
  cfg.seed = seed;
  cfg.labels = data.vocabulary;
  write_json(out_dir / "config.json", config_to_json(cfg));
}

}  // namespace fusionnet::app
