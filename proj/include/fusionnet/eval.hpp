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

#ifndef FUSIONNET_EVAL_HPP_
#define FUSIONNET_EVAL_HPP_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusionnet/dataset.hpp"
#include "fusionnet/fusion.hpp"
#include "fusionnet/training.hpp"

namespace fusionnet::eval {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth);

struct PrecisionF1 {
  double precision = 0.0;
  double f1 = 0.0;
};

// Macro average over the classes that occur in `truth` or `preds`; a class with
// no predicted positives has precision 0.
PrecisionF1 precision_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                         std::size_t n_classes);

// Equal error rate of one binary tag. Thresholds are the unique scores (a
// sample is positive when score >= threshold) plus +inf; EER is read off the
// linear interpolation of (FPR, FNR) between the two thresholds that bracket
// FPR == FNR.
double eer(std::span<const double> scores, std::span<const int> labels);

// Mean per-tag EER over tags with both classes present. scores/labels are [n x tags] row-major.
double mean_eer(std::span<const double> scores, std::span<const int> labels, std::size_t n_tags);

enum class SplitScheme { kProvidedFolds, kRandomCV, kDevEval };

std::string_view to_string(SplitScheme s);
SplitScheme parse_split_scheme(std::string_view name);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

struct SplitPlan {
  SplitScheme scheme = SplitScheme::kDevEval;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
};

// ProvidedFolds: one fold per distinct hint (seeded round-robin into k=4 when
// hints are absent). RandomCV: k=10 repetitions of a seeded 80:20 split.
// DevEval: hints "dev"/"eval" when present, else one seeded 80:20 split.
SplitPlan make_split_plan(SplitScheme scheme, std::size_t n_samples, std::uint64_t seed,
                          std::span<const std::optional<std::string>> hints = {}, std::size_t k = 0,
                          double train_frac = 0.8);

void write_split_plan(std::ostream& out, const SplitPlan& plan);

struct MetricSeries {
  std::string name;
  bool higher_is_better = true;
  std::vector<double> per_fold;

  double mean() const;
  double stddev() const;  // sample standard deviation, 0 for a single fold
};

struct EvalReport {
  fusion::FusionMode mode = fusion::FusionMode::kVanilla;
  std::vector<MetricSeries> metrics;

  const MetricSeries* find(std::string_view name) const;
};

// Everything besides the data and the mode that a run needs.
struct ExperimentSetup {
  fusion::ModelScale scale;
  training::TrainConfig train;
  std::size_t segment_length = 64;
  std::size_t segment_hop = 32;
  bool share_attention = true;
  // Worker threads for independent folds.
  std::size_t jobs = 1;
};

struct FoldOutcome {
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<training::CurvePoint> curve;
};

fusion::FusionConfig model_config(const ClipDataset& data, const ExperimentSetup& setup, fusion::FusionMode mode);

// Clip-level metrics of a trained model. Single-label data reports accuracy,
// precision and f1 (argmax decoding); multi-label data reports eer.
std::vector<std::pair<std::string, double>> evaluate(const fusion::FusionModel& model, const ClipDataset& data,
                                                     std::span<const std::size_t> clip_ids,
                                                     std::span<const Standardizer> norm, const ExperimentSetup& setup);

FoldOutcome run_fold(const ClipDataset& data, const Fold& fold, fusion::FusionMode mode, const ExperimentSetup& setup);

EvalReport run_mode(const ClipDataset& data, const SplitPlan& plan, fusion::FusionMode mode,
                    const ExperimentSetup& setup);

// One report per mode in Vanilla, EF, LF, EF+LF order, all on the same folds and seeds.
std::vector<EvalReport> run_ablation(const ClipDataset& data, const SplitPlan& plan, const ExperimentSetup& setup);

// mode,fold,metric,value; per-fold rows then "mean" and "std" rows.
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports);
// mode,<metric>_mean,<metric>_std,... one row per mode.
void write_table_csv(std::ostream& out, std::span<const EvalReport> reports);
// Fixed-width text table, values x100, each metric labelled with its polarity.
void write_table_text(std::ostream& out, std::span<const EvalReport> reports);

}  // namespace fusionnet::eval

#endif  // FUSIONNET_EVAL_HPP_
