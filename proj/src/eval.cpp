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

#include "fusionnet/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

#include "fusionnet/error.hpp"

namespace fusionnet::eval {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> truth) {
  if (preds.empty()) throw DataError("accuracy of an empty prediction set");
  if (preds.size() != truth.size()) throw DataError("accuracy: prediction/truth length mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

PrecisionF1 precision_f1(std::span<const std::size_t> preds, std::span<const std::size_t> truth,
                         std::size_t n_classes) {
  if (preds.empty()) throw DataError("precision/F1 of an empty prediction set");
  if (preds.size() != truth.size()) throw DataError("precision/F1: prediction/truth length mismatch");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  std::vector<bool> present(n_classes, false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || truth[i] >= n_classes) throw DataError("precision/F1: class id out of range");
    present[preds[i]] = present[truth[i]] = true;
    if (preds[i] == truth[i]) {
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[truth[i]];
    }
  }
  PrecisionF1 out;
  std::size_t classes = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (!present[c]) continue;
    ++classes;
    const double p = tp[c] + fp[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]) : 0.0;
    const double r = tp[c] + fn[c] ? static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]) : 0.0;
    out.precision += p;
    out.f1 += p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  out.precision /= static_cast<double>(classes);
  out.f1 /= static_cast<double>(classes);
  return out;
}

double eer(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("eer: score/label length mismatch");
  std::size_t pos = 0;
  for (int l : labels) pos += l != 0;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("EER undefined: labels contain a single class");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Walk thresholds upward; below the current threshold everything is called negative.
  double prev_fpr = 1.0, prev_fnr = 0.0;  // threshold = min score
  std::size_t below_pos = 0, below_neg = 0;
  std::size_t i = 0;
  while (true) {
    // Skip to the next unique score (or past the end: threshold +inf).
    const double current = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == current) {
      (labels[idx[i]] != 0 ? below_pos : below_neg) += 1;
      ++i;
    }
    const double fpr = static_cast<double>(neg - below_neg) / static_cast<double>(neg);
    const double fnr = static_cast<double>(below_pos) / static_cast<double>(pos);
    const double prev_d = prev_fpr - prev_fnr;
    const double d = fpr - fnr;
    if (prev_d == 0.0) return prev_fpr;
    if (d <= 0.0) {
      const double alpha = prev_d / (prev_d - d);
      return prev_fpr + alpha * (fpr - prev_fpr);
    }
    prev_fpr = fpr;
    prev_fnr = fnr;
  }
}

double mean_eer(std::span<const double> scores, std::span<const int> labels, std::size_t n_tags) {
  if (n_tags == 0 || scores.size() != labels.size() || scores.size() % n_tags != 0) {
    throw DataError("mean_eer: score/label matrix shape mismatch");
  }
  const std::size_t n = scores.size() / n_tags;
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> s(n);
  std::vector<int> l(n);
  for (std::size_t t = 0; t < n_tags; ++t) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = scores[i * n_tags + t];
      l[i] = labels[i * n_tags + t];
      pos += l[i] != 0;
    }
    if (pos == 0 || pos == n) continue;
    total += eer(s, l);
    ++used;
  }
  if (used == 0) throw DataError("EER undefined: no tag has both positive and negative examples");
  return total / static_cast<double>(used);
}

std::string_view to_string(SplitScheme s) {
  switch (s) {
    case SplitScheme::kProvidedFolds:
      return "provided-folds";
    case SplitScheme::kRandomCV:
      return "random-cv";
    case SplitScheme::kDevEval:
      return "dev-eval";
  }
  return "?";
}

SplitScheme parse_split_scheme(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "provided-folds" || s == "folds") return SplitScheme::kProvidedFolds;
  if (s == "random-cv" || s == "cv") return SplitScheme::kRandomCV;
  if (s == "dev-eval" || s == "deveval") return SplitScheme::kDevEval;
  throw UsageError("unknown split scheme '" + std::string(name) + "' (expected provided-folds, random-cv or dev-eval)");
}

namespace {

Fold holdout(std::vector<std::size_t> perm, double train_frac) {
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(perm.size()) * (1.0 - train_frac)));
  Fold f;
  f.test.assign(perm.begin(), perm.begin() + static_cast<long>(n_test));
  f.train.assign(perm.begin() + static_cast<long>(n_test), perm.end());
  std::sort(f.test.begin(), f.test.end());
  std::sort(f.train.begin(), f.train.end());
  return f;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

bool all_hinted(std::span<const std::optional<std::string>> hints, std::size_t n) {
  return hints.size() == n && std::all_of(hints.begin(), hints.end(), [](const auto& h) { return h.has_value(); });
}

}  // namespace

SplitPlan make_split_plan(SplitScheme scheme, std::size_t n, std::uint64_t seed,
                          std::span<const std::optional<std::string>> hints, std::size_t k, double train_frac) {
  if (n < 2) throw DataError("need at least two samples to split");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw UsageError("train fraction must be in (0, 1)");
  SplitPlan plan{scheme, seed, {}};
  switch (scheme) {
    case SplitScheme::kProvidedFolds: {
      std::vector<std::string> fold_of(n);
      if (all_hinted(hints, n)) {
        for (std::size_t i = 0; i < n; ++i) fold_of[i] = *hints[i];
      } else {
        const std::size_t folds = k ? k : 4;
        const auto perm = permutation(n, autodiff::mix_seed(seed, 0xf01d));
        for (std::size_t r = 0; r < n; ++r) fold_of[perm[r]] = std::to_string(r % folds + 1);
      }
      const std::set<std::string> ids(fold_of.begin(), fold_of.end());
      if (ids.size() < 2) throw DataError("provided folds need at least two distinct fold ids");
      for (const std::string& id : ids) {
        Fold f;
        for (std::size_t i = 0; i < n; ++i) (fold_of[i] == id ? f.test : f.train).push_back(i);
        plan.folds.push_back(std::move(f));
      }
      break;
    }
    case SplitScheme::kRandomCV: {
      const std::size_t reps = k ? k : 10;
      for (std::size_t r = 0; r < reps; ++r) plan.folds.push_back(holdout(permutation(n, autodiff::mix_seed(seed, r)), train_frac));
      break;
    }
    case SplitScheme::kDevEval: {
      if (all_hinted(hints, n)) {
        Fold f;
        for (std::size_t i = 0; i < n; ++i) {
          if (*hints[i] == "eval") {
            f.test.push_back(i);
          } else if (*hints[i] == "dev") {
            f.train.push_back(i);
          } else {
            throw DataError("dev-eval split hints must be 'dev' or 'eval', got '" + *hints[i] + "'");
          }
        }
        if (f.test.empty() || f.train.empty()) throw DataError("dev-eval split leaves one side empty");
        plan.folds.push_back(std::move(f));
      } else {
        plan.folds.push_back(holdout(permutation(n, autodiff::mix_seed(seed, 0xde7e)), train_frac));
      }
      break;
    }
  }
  return plan;
}

void write_split_plan(std::ostream& out, const SplitPlan& plan) {
  out << "{\"scheme\":\"" << to_string(plan.scheme) << "\",\"seed\":" << plan.seed << ",\"folds\":[";
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    if (f) out << ',';
    auto list = [&](const std::vector<std::size_t>& v) {
      out << '[';
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
      out << ']';
    };
    out << "{\"train\":";
    list(plan.folds[f].train);
    out << ",\"test\":";
    list(plan.folds[f].test);
    out << '}';
  }
  out << "]}\n";
}

double MetricSeries::mean() const {
  if (per_fold.empty()) return 0.0;
  return std::accumulate(per_fold.begin(), per_fold.end(), 0.0) / static_cast<double>(per_fold.size());
}

double MetricSeries::stddev() const {
  if (per_fold.size() < 2) return 0.0;
  const double m = mean();
  double acc = 0.0;
  for (double v : per_fold) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(per_fold.size() - 1));
}

const MetricSeries* EvalReport::find(std::string_view name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

fusion::FusionConfig model_config(const ClipDataset& data, const ExperimentSetup& setup, fusion::FusionMode mode) {
  fusion::FusionConfig cfg;
  cfg.channel_bins = data.channel_bins();
  cfg.frames = setup.segment_length;
  cfg.scale = setup.scale;
  cfg.scale.n_classes = data.n_classes();
  cfg.mode = mode;
  cfg.share_attention = setup.share_attention;
  cfg.dropout = setup.train.dropout;
  cfg.seed = setup.train.seed;
  return cfg;
}

std::vector<std::pair<std::string, double>> evaluate(const fusion::FusionModel& model, const ClipDataset& data,
                                                     std::span<const std::size_t> clip_ids,
                                                     std::span<const Standardizer> norm, const ExperimentSetup& setup) {
  if (clip_ids.empty()) throw DataError("nothing to evaluate");
  const std::size_t nc = data.n_classes();
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::size_t> preds, truth;
  for (std::size_t id : clip_ids) {
    const Clip& clip = data.clips.at(id);
    const auto segs = clip_segments(clip, norm, setup.segment_length, setup.segment_hop);
    const auto probs = training::predict(model, segs);
    if (data.multi_label) {
      const auto target = multi_hot(clip.labels, nc);
      for (std::size_t c = 0; c < nc; ++c) {
        scores.push_back(probs[c]);
        labels.push_back(target[c] != 0.0);
      }
    } else {
      preds.push_back(static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin()));
      truth.push_back(clip.labels.at(0));
    }
  }
  if (data.multi_label) return {{"eer", mean_eer(scores, labels, nc)}};
  const PrecisionF1 pf = precision_f1(preds, truth, nc);
  return {{"accuracy", accuracy(preds, truth)}, {"precision", pf.precision}, {"f1", pf.f1}};
}

FoldOutcome run_fold(const ClipDataset& data, const Fold& fold, fusion::FusionMode mode, const ExperimentSetup& setup) {
  const auto norm = fit_standardizers(data, fold.train);
  const auto samples = build_samples(data, fold.train, norm, setup.segment_length, setup.segment_hop);
  fusion::FusionModel model(model_config(data, setup, mode));
  FoldOutcome out;
  out.curve = training::train(model, samples, setup.train);
  out.metrics = evaluate(model, data, fold.test, norm, setup);
  return out;
}

EvalReport run_mode(const ClipDataset& data, const SplitPlan& plan, fusion::FusionMode mode,
                    const ExperimentSetup& setup) {
  data.validate();
  std::vector<FoldOutcome> outcomes(plan.folds.size());
  std::vector<std::exception_ptr> errors(plan.folds.size());
  const int jobs = static_cast<int>(std::max<std::size_t>(1, setup.jobs));
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (std::size_t f = 0; f < plan.folds.size(); ++f) {
    try {
      ExperimentSetup fold_setup = setup;
      fold_setup.train.seed = autodiff::mix_seed(setup.train.seed, f);
      outcomes[f] = run_fold(data, plan.folds[f], mode, fold_setup);
    } catch (...) {
      errors[f] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  EvalReport report;
  report.mode = mode;
  for (const auto& [name, value] : outcomes.front().metrics) {
    MetricSeries series{name, name != "eer", {}};
    for (const FoldOutcome& o : outcomes) {
      for (const auto& [n2, v2] : o.metrics) {
        if (n2 == name) series.per_fold.push_back(v2);
      }
    }
    report.metrics.push_back(std::move(series));
  }
  return report;
}

std::vector<EvalReport> run_ablation(const ClipDataset& data, const SplitPlan& plan, const ExperimentSetup& setup) {
  std::vector<EvalReport> reports;
  for (fusion::FusionMode mode : fusion::kAllModes) reports.push_back(run_mode(data, plan, mode, setup));
  return reports;
}

namespace {

std::string fmt12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "mode,fold,metric,value\n";
  for (const EvalReport& r : reports) {
    for (const MetricSeries& m : r.metrics) {
      for (std::size_t f = 0; f < m.per_fold.size(); ++f) {
        out << to_string(r.mode) << ',' << f << ',' << m.name << ',' << fmt12(m.per_fold[f]) << '\n';
      }
      out << to_string(r.mode) << ",mean," << m.name << ',' << fmt12(m.mean()) << '\n';
      out << to_string(r.mode) << ",std," << m.name << ',' << fmt12(m.stddev()) << '\n';
    }
  }
}

void write_table_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "mode";
  if (!reports.empty()) {
    for (const MetricSeries& m : reports.front().metrics) out << ',' << m.name << "_mean," << m.name << "_std";
  }
  out << '\n';
  for (const EvalReport& r : reports) {
    out << to_string(r.mode);
    for (const MetricSeries& m : r.metrics) out << ',' << fmt12(m.mean()) << ',' << fmt12(m.stddev());
    out << '\n';
  }
}

void write_table_text(std::ostream& out, std::span<const EvalReport> reports) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-10s", "Technique");
  out << buf;
  if (!reports.empty()) {
    for (const MetricSeries& m : reports.front().metrics) {
      const std::string head = m.name + (m.higher_is_better ? " (higher better)" : " (lower better)");
      std::snprintf(buf, sizeof buf, " | %-24s", head.c_str());
      out << buf;
    }
  }
  out << '\n';
  for (const EvalReport& r : reports) {
    std::snprintf(buf, sizeof buf, "%-10s", std::string(to_string(r.mode)).c_str());
    out << buf;
    for (const MetricSeries& m : r.metrics) {
      std::snprintf(buf, sizeof buf, " | %7.2f +- %-13.2f", 100.0 * m.mean(), 100.0 * m.stddev());
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace fusionnet::eval
