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

// Command-line front end: extract, train, eval, ablate, gradcheck, fixture.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fusionnet/app.hpp"
#include "fusionnet/autodiff.hpp"
#include "fusionnet/error.hpp"

namespace {

namespace app = fusionnet::app;
namespace fs = std::filesystem;

// Flags that mirror ExperimentConfig fields; unset flags leave the config alone.
struct ConfigFlags {
  std::optional<fs::path> config;
  std::vector<std::string> channels;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs, batch_size, kernels_l1, kernels_l2, head_depth, head_width;
  std::optional<std::size_t> segment_length, segment_hop, folds;
  std::optional<double> lr, l2, dropout, train_fraction;
  std::optional<std::string> split, drop_label;
  bool keep_all_labels = false;
  std::optional<bool> share_attention;
  bool full_scale = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config; flags override its values");
    cmd->add_option("--channels", channels, "feature kinds, e.g. Mel,LogMel,Mfcc,Cqt")->delimiter(',');
    cmd->add_option("--mode", mode, "vanilla | ef | lf | hybrid");
    cmd->add_option("--seed", seed);
    cmd->add_option("--epochs", epochs);
    cmd->add_option("--batch-size", batch_size);
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--l2", l2, "L2 coefficient");
    cmd->add_option("--dropout", dropout, "drop probability of the dense head");
    cmd->add_option("--kernels-l1", kernels_l1);
    cmd->add_option("--kernels-l2", kernels_l2);
    cmd->add_option("--head-depth", head_depth);
    cmd->add_option("--head-width", head_width);
    cmd->add_option("--segment-length", segment_length, "frames per segment");
    cmd->add_option("--segment-hop", segment_hop);
    cmd->add_option("--split", split, "provided-folds | random-cv | dev-eval");
    cmd->add_option("--folds", folds, "fold/repetition count (0: scheme default)");
    cmd->add_option("--train-fraction", train_fraction);
    cmd->add_option("--drop-label", drop_label, "label removed from every entry (default: others)");
    cmd->add_flag("--keep-all-labels", keep_all_labels, "do not drop any label");
    cmd->add_flag("--share-attention,!--no-share-attention", share_attention, "one W_i/W_j pair for all channel pairs");
    cmd->add_flag("--full-scale", full_scale, "full-size kernels, head and 1024-frame segments");
  }

  app::ExperimentConfig resolve() const {
    app::ExperimentConfig cfg = app::resolve_config(config, nullptr);
    if (full_scale) app::apply_full_scale(cfg);
    app::json o = app::json::object();
    if (!channels.empty()) o["channels"] = channels;
    if (mode) o["mode"] = *mode;
    if (seed) o["seed"] = *seed;
    if (share_attention) o["share_attention"] = *share_attention;
    if (segment_length) o["segment_length"] = *segment_length;
    if (segment_hop) o["segment_hop"] = *segment_hop;
    if (drop_label) o["drop_label"] = *drop_label;
    if (keep_all_labels) o["drop_label"] = nullptr;
    app::json train = app::json::object();
    if (epochs) train["epochs"] = *epochs;
    if (batch_size) train["batch_size"] = *batch_size;
    if (lr) train["learning_rate"] = *lr;
    if (l2) train["l2"] = *l2;
    if (dropout) train["dropout"] = *dropout;
    if (!train.empty()) o["train"] = train;
    app::json scale = app::json::object();
    if (kernels_l1) scale["kernels_l1"] = *kernels_l1;
    if (kernels_l2) scale["kernels_l2"] = *kernels_l2;
    if (head_depth) scale["head_depth"] = *head_depth;
    if (head_width) scale["head_width"] = *head_width;
    if (!scale.empty()) o["scale"] = scale;
    app::json split_j = app::json::object();
    if (split) split_j["scheme"] = *split;
    if (folds) split_j["folds"] = *folds;
    if (train_fraction) split_j["train_fraction"] = *train_fraction;
    if (!split_j.empty()) o["split"] = split_j;
    cfg = app::config_from_json(o, cfg);
    cfg.validate();
    return cfg;
  }
};

struct DataFlags {
  fs::path manifest;
  std::optional<fs::path> cache_dir;
  std::size_t jobs = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--manifest", manifest, "JSON-lines clip manifest")->required();
    cmd->add_option("--cache-dir", cache_dir, "feature cache (default: $FUSIONNET_CACHE or .fusionnet-cache)");
    cmd->add_option("--jobs", jobs, "worker threads for extraction and folds")->check(CLI::PositiveNumber);
  }

  fs::path cache() const { return cache_dir ? *cache_dir : app::default_cache_dir(); }
};

int run(int argc, char** argv) {
  CLI::App cli{"Multi-channel deep fusion of complementary acoustic features"};
  cli.require_subcommand(1);

  ConfigFlags cf;
  DataFlags df;
  fs::path out;
  fs::path checkpoint;
  std::uint64_t seed = 1;
  std::size_t n_clips = 400;
  bool separable = false;
  std::string fault;

  CLI::App* extract = cli.add_subcommand("extract", "cache feature maps for every manifest entry");
  df.attach(extract);
  cf.attach(extract);

  CLI::App* train = cli.add_subcommand("train", "train one model; writes checkpoint, curves and config");
  df.attach(train);
  cf.attach(train);
  train->add_option("--out", out, "output directory")->required();

  CLI::App* evaluate = cli.add_subcommand("eval", "clip-level metrics of a checkpoint");
  df.attach(evaluate);
  cf.attach(evaluate);
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--out", out, "report CSV path")->required();

  CLI::App* ablate = cli.add_subcommand("ablate", "Vanilla / EF / LF / EF+LF on identical folds");
  df.attach(ablate);
  cf.attach(ablate);
  ablate->add_option("--out", out, "output directory")->required();

  CLI::App* gradcheck = cli.add_subcommand("gradcheck", "finite-difference check of every op and a toy model");
  gradcheck->add_option("--seed", seed);
  gradcheck->add_option("--inject-fault", fault)->group("");

  CLI::App* fixture = cli.add_subcommand("fixture", "write the synthetic two-view fixture");
  fixture->add_option("--out", out, "output directory")->required();
  fixture->add_option("--seed", seed);
  fixture->add_option("--clips", n_clips);
  fixture->add_flag("--separable", separable, "each class readable from a single view");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return e.get_exit_code() == 0 ? 0 : static_cast<int>(fusionnet::ExitCode::kUsage);
  }

  if (extract->parsed()) {
    const auto cfg = cf.resolve();
    const auto stats = app::cmd_extract(app::read_manifest(df.manifest), cfg.channels, df.cache(), df.jobs);
    std::cout << "written " << stats.written << ", skipped " << stats.skipped << ", failed " << stats.failures.size()
              << '\n';
    for (const auto& f : stats.failures) std::cerr << "error: " << f << '\n';
    return stats.failures.empty() ? 0 : static_cast<int>(fusionnet::ExitCode::kData);
  }
  if (train->parsed()) {
    auto cfg = cf.resolve();
    const auto manifest = app::read_manifest(df.manifest);
    app::cmd_train(cfg, manifest, out, df.cache(), df.jobs);
    return 0;
  }
  if (evaluate->parsed()) {
    auto cfg = cf.resolve();
    const auto manifest = app::read_manifest(df.manifest);
    app::cmd_eval(cfg, checkpoint, manifest, out, df.cache(), df.jobs);
    return 0;
  }
  if (ablate->parsed()) {
    auto cfg = cf.resolve();
    const auto manifest = app::read_manifest(df.manifest);
    app::cmd_ablate(cfg, manifest, out, df.cache(), df.jobs);
    return 0;
  }
  if (gradcheck->parsed()) {
    fusionnet::autodiff::testing::inject_backward_fault(fault);
    return app::cmd_gradcheck(std::cout, seed);
  }
  app::cmd_fixture(out, seed, n_clips, separable);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const fusionnet::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(fusionnet::ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(fusionnet::ExitCode::kData);
  }
}
