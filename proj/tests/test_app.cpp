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

#include <sys/wait.h>

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "fusionnet/app.hpp"
#include "fusionnet/audio.hpp"
#include "fusionnet/error.hpp"

using namespace fusionnet;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FUSIONNET_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("fusionnet_app_" + std::string(info->name()) + "_" +
                                        std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const std::string& rel) const { return (dir_ / rel).string(); }

  void write_noise_wav(const std::string& name, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.1);
    std::vector<double> s(16000);
    for (double& x : s) x = g(rng);
    write_wav(dir_ / name, AudioClip::make(std::move(s), 16000));
  }

  std::size_t count_files(const fs::path& d) const {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(d)) n += e.is_regular_file();
    return n;
  }

  fs::path dir_;
};

}  // namespace

TEST(Manifest, ParsesEntriesAndRejectsUnknownFields) {
  std::istringstream ok(
      "{\"path\":\"a.wav\",\"labels\":[\"x\",\"y\"],\"split\":\"dev\"}\n\n{\"path\":\"b.wav\",\"labels\":[]}\n");
  const auto m = app::parse_manifest(ok, "/data");
  ASSERT_EQ(m.entries.size(), 2u);
  EXPECT_EQ(m.entries[0].path, fs::path("/data/a.wav"));
  EXPECT_EQ(m.entries[0].labels, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(m.entries[0].split, "dev");
  EXPECT_FALSE(m.entries[1].split.has_value());

  std::istringstream extra("{\"path\":\"a.wav\",\"labels\":[],\"colour\":1}\n");
  EXPECT_THROW(app::parse_manifest(extra, "."), DataError);
  std::istringstream empty("\n");
  EXPECT_THROW(app::parse_manifest(empty, "."), DataError);
  std::istringstream broken("{\"path\":\n");
  EXPECT_THROW(app::parse_manifest(broken, "."), DataError);
}

TEST(Config, StrictJsonAndRoundTrip) {
  app::ExperimentConfig cfg;
  cfg.mode = fusion::FusionMode::kLateFusion;
  cfg.channels = {FeatureKind::kCqt, FeatureKind::kMel};
  cfg.train.learning_rate = 0.02;
  cfg.seed = 9;
  const auto back = app::config_from_json(app::config_to_json(cfg));
  EXPECT_EQ(app::config_to_json(back).dump(), app::config_to_json(cfg).dump());
  EXPECT_THROW(app::config_from_json(app::json{{"modee", "ef"}}), UsageError);
  EXPECT_THROW(app::config_from_json(app::json{{"channels", {"Mel", "Mel"}}}).validate(), UsageError);
  EXPECT_THROW(app::config_from_json(app::json{{"mode", "sideways"}}), UsageError);

  app::ExperimentConfig single;
  single.channels = {FeatureKind::kMel};
  single.mode = fusion::FusionMode::kEarlyFusion;
  EXPECT_THROW(app::load_dataset(app::Manifest{}, single, "/nonexistent", 1), UsageError);
  single.mode = fusion::FusionMode::kVanilla;
  EXPECT_THROW(app::load_dataset(app::Manifest{}, single, "/nonexistent", 1), DataError);

  app::ExperimentConfig full;
  app::apply_full_scale(full);
  EXPECT_EQ(full.scale.kernels_l1, 128u);
  EXPECT_EQ(full.segment_length, 1024u);
}

TEST(Cache, KeysAreContentHashes) {
  EXPECT_EQ(app::content_hash({}), 0xcbf29ce484222325ULL);
  const std::vector<std::uint8_t> a{1, 2, 3}, b{1, 2, 4};
  EXPECT_NE(app::content_hash(a), app::content_hash(b));
  const fs::path p = app::cache_path("/c", a, FeatureKind::kMfcc);
  EXPECT_EQ(p.parent_path(), fs::path("/c"));
  EXPECT_EQ(p.filename().string().size(), 16u + std::string(".Mfcc.caf").size());
  EXPECT_TRUE(p.string().ends_with(".Mfcc.caf"));
}

TEST_F(Workdir, ExtractWritesOneFilePerClipAndKindAndIsIdempotent) {
  std::ofstream m(p("manifest.jsonl"));
  for (int i = 0; i < 3; ++i) {
    write_noise_wav("c" + std::to_string(i) + ".wav", i);
    m << "{\"path\":\"c" << i << ".wav\",\"labels\":[\"x\"]}\n";
  }
  m.close();
  const std::string args = "extract --manifest " + p("manifest.jsonl") + " --cache-dir " + p("cache") +
                           " --channels Mel,Mfcc";
  ASSERT_EQ(run_cli(args), 0);
  EXPECT_EQ(count_files(p("cache")), 6u);
  std::vector<fs::file_time_type> stamps;
  for (const auto& e : fs::directory_iterator(p("cache"))) stamps.push_back(e.last_write_time());

  const fs::path manifest = p("manifest.jsonl");
  const auto stats = app::cmd_extract(app::read_manifest(manifest), {FeatureKind::kMel, FeatureKind::kMfcc},
                                      p("cache"), 1);
  EXPECT_EQ(stats.written, 0u);
  EXPECT_EQ(stats.skipped, 6u);
  std::size_t k = 0;
  for (const auto& e : fs::directory_iterator(p("cache"))) EXPECT_EQ(e.last_write_time(), stamps[k++]);
}

TEST_F(Workdir, ExtractIsolatesCorruptFiles) {
  write_noise_wav("good.wav", 1);
  write_noise_wav("fine.wav", 2);
  std::ofstream(p("bad.wav")) << "RIFF....this is not audio";
  std::ofstream(p("manifest.jsonl")) << "{\"path\":\"good.wav\",\"labels\":[\"x\"]}\n"
                                     << "{\"path\":\"bad.wav\",\"labels\":[\"x\"]}\n"
                                     << "{\"path\":\"fine.wav\",\"labels\":[\"y\"]}\n";
  EXPECT_EQ(run_cli("extract --manifest " + p("manifest.jsonl") + " --cache-dir " + p("cache") +
                    " --channels Mel,Mfcc"),
            2);
  EXPECT_EQ(count_files(p("cache")), 4u);
}

TEST_F(Workdir, TrainIsDeterministicAndVanillaHasNoFusionTensors) {
  ASSERT_EQ(run_cli("fixture --out " + p("fx") + " --clips 24"), 0);
  const std::string base = "train --manifest " + p("fx/manifest.jsonl") + " --config " + p("fx/config.json") +
                           " --cache-dir " + p("cache") + " --epochs 1 --seed 7";
  ASSERT_EQ(run_cli(base + " --out " + p("a")), 0);
  ASSERT_EQ(run_cli(base + " --out " + p("b")), 0);
  ASSERT_EQ(run_cli(base + " --mode vanilla --out " + p("v")), 0);
  for (const char* f : {"curves.csv", "checkpoint.fusn", "config.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  EXPECT_NE(slurp(p("a/checkpoint.fusn")), slurp(p("v/checkpoint.fusn")));

  // 24 clips, dev 80% -> 19 train clips x 1 segment, batch 16 -> 2 iterations, plus the header.
  const std::string curve = slurp(p("a/curves.csv"));
  EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 3);

  bool has_attention = false, has_interaction = false;
  for (const auto& [name, _] : autodiff::load_checkpoint(p("a/checkpoint.fusn"))) {
    has_attention |= name.starts_with("attn.");
    has_interaction |= name == "interaction.W";
  }
  EXPECT_TRUE(has_attention && has_interaction);
  for (const auto& [name, _] : autodiff::load_checkpoint(p("v/checkpoint.fusn"))) {
    EXPECT_FALSE(name.starts_with("attn.")) << name;
    EXPECT_NE(name, "interaction.W");
    EXPECT_NE(name, "conv2.attn_kernels");
  }
}

TEST_F(Workdir, EvalReachesHighAccuracyOnSeparableFixture) {
  ASSERT_EQ(run_cli("fixture --separable --out " + p("fx") + " --clips 200"), 0);
  const std::string common = " --manifest " + p("fx/manifest.jsonl") + " --config " + p("fx/config.json") +
                             " --cache-dir " + p("cache") + " --lr 0.01";
  ASSERT_EQ(run_cli("train" + common + " --out " + p("t")), 0);
  ASSERT_EQ(run_cli("eval" + common + " --checkpoint " + p("t/checkpoint.fusn") + " --out " + p("r.csv")), 0);
  std::istringstream rows(slurp(p("r.csv")));
  std::string line;
  double acc = -1.0;
  while (std::getline(rows, line)) {
    if (line.rfind("EF+LF,0,accuracy,", 0) == 0) acc = std::stod(line.substr(line.rfind(',') + 1));
  }
  EXPECT_GT(acc, 0.9);
}

TEST_F(Workdir, EvalErrors) {
  ASSERT_EQ(run_cli("fixture --out " + p("fx") + " --clips 24"), 0);
  const std::string common = " --manifest " + p("fx/manifest.jsonl") + " --config " + p("fx/config.json") +
                             " --cache-dir " + p("cache") + " --epochs 1";
  ASSERT_EQ(run_cli("train" + common + " --mode vanilla --out " + p("v")), 0);
  EXPECT_EQ(run_cli("eval" + common + " --mode vanilla --checkpoint " + p("v/checkpoint.fusn") + " --out " +
                    p("ok.csv")),
            0);

  // Checkpoint from a vanilla model, evaluated as hybrid: the first missing tensor is named.
  app::ExperimentConfig cfg = app::resolve_config(dir_ / "fx/config.json", app::json::object());
  cfg.mode = fusion::FusionMode::kHybrid;
  try {
    app::cmd_eval(cfg, p("v/checkpoint.fusn"), app::read_manifest(p("fx/manifest.jsonl")), p("bad.csv"),
                  p("cache"), 1);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2.attn_kernels"), std::string::npos) << e.what();
  }
  EXPECT_EQ(run_cli("eval" + common + " --mode hybrid --checkpoint " + p("v/checkpoint.fusn") + " --out " +
                    p("bad.csv")),
            2);

  std::ofstream(p("empty.jsonl")) << "";
  EXPECT_EQ(run_cli("eval --manifest " + p("empty.jsonl") + " --config " + p("fx/config.json") + " --checkpoint " +
                    p("v/checkpoint.fusn") + " --out " + p("e.csv")),
            2);
}

TEST_F(Workdir, MultiLabelManifestReportsEer) {
  ASSERT_EQ(run_cli("fixture --out " + p("fx") + " --clips 24"), 0);
  // Give every other clip a second tag.
  std::istringstream in(slurp(p("fx/manifest.jsonl")));
  std::ofstream out(p("fx/multi.jsonl"));
  std::string line;
  for (int i = 0; std::getline(in, line); ++i) {
    auto j = app::json::parse(line);
    if (i % 2 == 0) j["labels"].push_back(j["labels"][0] == "class0" ? "class1" : "class0");
    out << j.dump() << '\n';
  }
  out.close();
  const std::string common = " --manifest " + p("fx/multi.jsonl") + " --config " + p("fx/config.json") +
                             " --cache-dir " + p("cache") + " --epochs 1";
  ASSERT_EQ(run_cli("train" + common + " --out " + p("t")), 0);
  ASSERT_EQ(run_cli("eval" + common + " --checkpoint " + p("t/checkpoint.fusn") + " --out " + p("r.csv")), 0);
  const std::string report = slurp(p("r.csv"));
  EXPECT_NE(report.find(",eer,"), std::string::npos) << report;
  EXPECT_EQ(report.find("accuracy"), std::string::npos) << report;
}

TEST_F(Workdir, AblateWritesFourModesByteIdentically) {
  ASSERT_EQ(run_cli("fixture --out " + p("fx") + " --clips 24"), 0);
  const std::string base = "ablate --manifest " + p("fx/manifest.jsonl") + " --config " + p("fx/config.json") +
                           " --cache-dir " + p("cache") + " --epochs 1";
  ASSERT_EQ(run_cli(base + " --out " + p("a")), 0);
  ASSERT_EQ(run_cli(base + " --jobs 2 --out " + p("b")), 0);
  for (const char* f : {"folds.json", "config.json", "report.csv", "table.csv", "table.txt"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  std::istringstream table(slurp(p("a/table.csv")));
  std::string line;
  std::vector<std::string> modes;
  std::getline(table, line);
  EXPECT_EQ(line, "mode,accuracy_mean,accuracy_std,precision_mean,precision_std,f1_mean,f1_std");
  while (std::getline(table, line)) modes.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(modes, (std::vector<std::string>{"Vanilla", "EF", "LF", "EF+LF"}));
}

TEST_F(Workdir, FixtureAndGradcheckAreDeterministic) {
  ASSERT_EQ(run_cli("fixture --out " + p("a") + " --clips 16 --seed 3"), 0);
  ASSERT_EQ(run_cli("fixture --out " + p("b") + " --clips 16 --seed 3"), 0);
  EXPECT_EQ(slurp(p("a/manifest.jsonl")), slurp(p("b/manifest.jsonl")));
  EXPECT_EQ(slurp(p("a/config.json")), slurp(p("b/config.json")));
  const std::string g = std::string(FUSIONNET_CLI) + " gradcheck > ";
  ASSERT_EQ(std::system((g + p("g1.txt")).c_str()), 0);
  ASSERT_EQ(std::system((g + p("g2.txt")).c_str()), 0);
  EXPECT_EQ(slurp(p("g1.txt")), slurp(p("g2.txt")));
}

TEST(ExitCodes, FollowTheDocumentedScheme) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("train --bogus"), 1);
  EXPECT_EQ(run_cli("train --manifest /nonexistent/m.jsonl --out /tmp/x --mode sideways"), 1);
  EXPECT_EQ(run_cli("train --manifest /nonexistent/m.jsonl --out /tmp/x"), 2);
  EXPECT_EQ(run_cli("gradcheck"), 0);
  EXPECT_EQ(run_cli("gradcheck --inject-fault dense"), 3);
  EXPECT_EQ(run_cli("--help"), 0);
}
