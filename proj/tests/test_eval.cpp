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

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "fusionnet/error.hpp"
#include "fusionnet/eval.hpp"
#include "fusionnet/fixture.hpp"

using namespace fusionnet;
using namespace fusionnet::eval;

namespace {

// O(n^2) sweep: error rates at every distinct threshold, then linear interpolation at the crossing.
double eer_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds(s.begin(), s.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.push_back(INFINITY);
  const double pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const double neg = static_cast<double>(y.size()) - pos;
  std::vector<double> fpr, fnr;
  for (double t : thresholds) {
    double fa = 0, miss = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i] == 0 && s[i] >= t) ++fa;
      if (y[i] == 1 && s[i] < t) ++miss;
    }
    fpr.push_back(fa / neg);
    fnr.push_back(miss / pos);
  }
  if (fpr[0] == fnr[0]) return fpr[0];
  for (std::size_t k = 1; k < fpr.size(); ++k) {
    const double d0 = fpr[k - 1] - fnr[k - 1], d1 = fpr[k] - fnr[k];
    if (d1 <= 0.0) return fpr[k - 1] + d0 / (d0 - d1) * (fpr[k] - fpr[k - 1]);
  }
  return NAN;
}

PrecisionF1 confusion_oracle(const std::vector<std::size_t>& p, const std::vector<std::size_t>& t, std::size_t n) {
  std::vector<std::vector<double>> cm(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < p.size(); ++i) cm[t[i]][p[i]] += 1.0;
  PrecisionF1 out;
  double classes = 0;
  for (std::size_t c = 0; c < n; ++c) {
    double col = 0, row = 0;
    for (std::size_t k = 0; k < n; ++k) {
      col += cm[k][c];
      row += cm[c][k];
    }
    if (col == 0 && row == 0) continue;
    const double prec = col > 0 ? cm[c][c] / col : 0.0;
    const double rec = row > 0 ? cm[c][c] / row : 0.0;
    out.precision += prec;
    out.f1 += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    classes += 1;
  }
  out.precision /= classes;
  out.f1 /= classes;
  return out;
}

}  // namespace

TEST(Accuracy, Examples) {
  const std::vector<std::size_t> t{0, 1, 2, 3};
  EXPECT_EQ(accuracy(t, t), 1.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{1, 2, 3, 0}, t), 0.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{0, 1, 2, 0}, t), 0.75);
  EXPECT_THROW(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), DataError);
}

TEST(PrecisionF1, Examples) {
  const std::vector<std::size_t> t{0, 1, 2, 1};
  const auto perfect = precision_f1(t, t, 3);
  EXPECT_EQ(perfect.precision, 1.0);
  EXPECT_EQ(perfect.f1, 1.0);
  const auto constant = precision_f1(std::vector<std::size_t>{0, 0, 0, 0}, std::vector<std::size_t>{0, 0, 1, 1}, 2);
  EXPECT_DOUBLE_EQ(constant.precision, 0.25);
  // Class 0 predicted 4 times: 2 right, 2 mislabeled into it from class 1.
  const std::vector<std::size_t> p{0, 0, 0, 0, 1, 1}, tr{0, 0, 1, 1, 1, 1};
  const auto got = precision_f1(p, tr, 2), ref = confusion_oracle(p, tr, 2);
  EXPECT_DOUBLE_EQ(got.precision, ref.precision);
  EXPECT_DOUBLE_EQ(got.f1, ref.f1);
  EXPECT_THROW(precision_f1(std::vector<std::size_t>{}, std::vector<std::size_t>{}, 2), DataError);
}

TEST(PrecisionF1, MatchesConfusionMatrixOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 5, m = 1 + rng() % 40;
    std::vector<std::size_t> p(m), t(m);
    for (std::size_t i = 0; i < m; ++i) {
      t[i] = rng() % n;
      p[i] = rng() % 3 == 0 ? t[i] : rng() % n;
    }
    const auto got = precision_f1(p, t, n), ref = confusion_oracle(p, t, n);
    ASSERT_NEAR(got.precision, ref.precision, 1e-12);
    ASSERT_NEAR(got.f1, ref.f1, 1e-12);
  }
}

TEST(Eer, Examples) {
  EXPECT_EQ(eer(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(eer(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{1, 1, 0, 0}), 1.0);
  const std::vector<double> s{0.1, 0.2, 0.6, 0.9};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(eer(s, y), eer_oracle(s, y));
  EXPECT_DOUBLE_EQ(eer(s, y), 0.5);
  try {
    eer(s, std::vector<int>{1, 1, 1, 1});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("EER undefined"), std::string::npos);
  }
}

TEST(Eer, MatchesThresholdSweepOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      // Coarse scores in some trials to exercise ties.
      s[i] = trial % 3 == 0 ? std::floor(u(rng) * 4) / 4 : u(rng) + 0.3 * y[i];
    }
    y[0] = 0;
    y[1] = 1;
    ASSERT_NEAR(eer(s, y), eer_oracle(s, y), 1e-12) << "trial " << trial;
  }
}

TEST(Eer, MeanOverTagsSkipsSingleClassTags) {
  // 4 clips x 2 tags; tag 1 is always positive.
  const std::vector<double> s{0.1, 0.9, 0.2, 0.8, 0.8, 0.7, 0.9, 0.6};
  const std::vector<int> y{0, 1, 0, 1, 1, 1, 1, 1};
  EXPECT_EQ(mean_eer(s, y, 2), 0.0);
  EXPECT_THROW(mean_eer(s, std::vector<int>(8, 1), 2), DataError);
}

TEST(SplitPlan, FoldsPartitionTheSamples) {
  for (SplitScheme scheme : {SplitScheme::kProvidedFolds, SplitScheme::kRandomCV, SplitScheme::kDevEval}) {
    const SplitPlan plan = make_split_plan(scheme, 50, 3);
    ASSERT_FALSE(plan.folds.empty());
    std::multiset<std::size_t> tested;
    for (const Fold& f : plan.folds) {
      std::set<std::size_t> all(f.train.begin(), f.train.end());
      for (std::size_t i : f.test) {
        EXPECT_FALSE(all.count(i));
        all.insert(i);
        tested.insert(i);
      }
      EXPECT_EQ(all.size(), 50u);
    }
    if (scheme == SplitScheme::kProvidedFolds) {
      EXPECT_EQ(plan.folds.size(), 4u);
      for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(tested.count(i), 1u);
    }
    if (scheme == SplitScheme::kRandomCV) {
      EXPECT_EQ(plan.folds.size(), 10u);
      for (const Fold& f : plan.folds) EXPECT_EQ(f.test.size(), 10u);
    }
    if (scheme == SplitScheme::kDevEval) EXPECT_EQ(plan.folds.front().test.size(), 10u);
  }
}

TEST(SplitPlan, SeedsAndHintsDriveAssignment) {
  const auto a = make_split_plan(SplitScheme::kRandomCV, 30, 1), b = make_split_plan(SplitScheme::kRandomCV, 30, 1);
  const auto c = make_split_plan(SplitScheme::kRandomCV, 30, 2);
  EXPECT_EQ(a.folds[3].test, b.folds[3].test);
  EXPECT_NE(a.folds[3].test, c.folds[3].test);

  std::vector<std::optional<std::string>> hints;
  for (int i = 0; i < 6; ++i) hints.emplace_back(i < 4 ? "dev" : "eval");
  const auto de = make_split_plan(SplitScheme::kDevEval, 6, 0, hints);
  EXPECT_EQ(de.folds.front().test, (std::vector<std::size_t>{4, 5}));
  hints[0] = "other";
  EXPECT_THROW(make_split_plan(SplitScheme::kDevEval, 6, 0, hints), DataError);

  std::vector<std::optional<std::string>> folds{"1", "2", "1", "3", "2", "3"};
  const auto pf = make_split_plan(SplitScheme::kProvidedFolds, 6, 0, folds);
  ASSERT_EQ(pf.folds.size(), 3u);
  EXPECT_EQ(pf.folds[0].test, (std::vector<std::size_t>{0, 2}));
  EXPECT_THROW(make_split_plan(SplitScheme::kDevEval, 1, 0), DataError);
  EXPECT_THROW(make_split_plan(SplitScheme::kDevEval, 10, 0, {}, 0, 1.0), UsageError);
}

TEST(SplitPlan, JsonLayout) {
  SplitPlan p{SplitScheme::kDevEval, 7, {{{0, 2}, {1}}}};
  std::ostringstream out;
  write_split_plan(out, p);
  EXPECT_EQ(out.str(), "{\"scheme\":\"dev-eval\",\"seed\":7,\"folds\":[{\"train\":[0,2],\"test\":[1]}]}\n");
  for (SplitScheme s : {SplitScheme::kProvidedFolds, SplitScheme::kRandomCV, SplitScheme::kDevEval})
    EXPECT_EQ(parse_split_scheme(to_string(s)), s);
}

TEST(MetricSeries, MeanAndSampleStd) {
  const MetricSeries m{"accuracy", true, {0.5, 0.7, 0.9}};
  EXPECT_DOUBLE_EQ(m.mean(), 0.7);
  EXPECT_NEAR(m.stddev(), 0.2, 1e-15);
  EXPECT_EQ((MetricSeries{"x", true, {0.4}}).stddev(), 0.0);
}

TEST(Writers, TableLayouts) {
  const std::vector<EvalReport> reports{
      {fusion::FusionMode::kVanilla, {{"accuracy", true, {0.5, 0.75}}}},
      {fusion::FusionMode::kHybrid, {{"accuracy", true, {1.0, 1.0}}}},
  };
  std::ostringstream csv, table, report;
  write_table_csv(csv, reports);
  EXPECT_EQ(csv.str(), "mode,accuracy_mean,accuracy_std\nVanilla,0.625,0.176776695297\nEF+LF,1,0\n");
  write_report_csv(report, reports);
  EXPECT_NE(report.str().find("Vanilla,1,accuracy,0.75\n"), std::string::npos);
  EXPECT_NE(report.str().find("EF+LF,mean,accuracy,1\n"), std::string::npos);
  write_table_text(table, reports);
  EXPECT_NE(table.str().find("62.50"), std::string::npos);
  EXPECT_NE(table.str().find("higher better"), std::string::npos);
}

TEST(Ablation, SmallFixtureRunsAllModesDeterministically) {
  fixture::FixtureOptions opt;
  opt.n_clips = 32;
  const ClipDataset data = fixture::make_fixture(opt);
  ExperimentSetup setup = fixture::experiment_setup(3);
  setup.train.epochs = 1;
  const SplitPlan plan = make_split_plan(SplitScheme::kDevEval, data.clips.size(), 3);
  const auto reports = run_ablation(data, plan, setup);
  ASSERT_EQ(reports.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(reports[i].mode, fusion::kAllModes[i]);
    ASSERT_NE(reports[i].find("accuracy"), nullptr);
    EXPECT_NE(reports[i].find("f1"), nullptr);
    EXPECT_EQ(reports[i].find("eer"), nullptr);
  }
  const EvalReport again = run_mode(data, plan, fusion::FusionMode::kVanilla, setup);
  EXPECT_EQ(again.find("accuracy")->per_fold, reports[0].find("accuracy")->per_fold);
  EXPECT_EQ(again.find("precision")->per_fold, reports[0].find("precision")->per_fold);
}

TEST(Ablation, MultiLabelDataReportsEer) {
  fixture::FixtureOptions opt;
  opt.n_clips = 24;
  ClipDataset data = fixture::make_fixture(opt);
  data.multi_label = true;
  for (std::size_t i = 0; i < data.clips.size(); i += 3) data.clips[i].labels.push_back((data.clips[i].labels[0] + 1) % 4);
  ExperimentSetup setup = fixture::experiment_setup(0);
  setup.train.epochs = 1;
  const auto r = run_mode(data, make_split_plan(SplitScheme::kDevEval, data.clips.size(), 0, {}, 0, 0.5),
                          fusion::FusionMode::kLateFusion, setup);
  ASSERT_NE(r.find("eer"), nullptr);
  EXPECT_FALSE(r.find("eer")->higher_is_better);
  EXPECT_EQ(r.find("accuracy"), nullptr);
}
