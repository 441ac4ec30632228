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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fusionnet/error.hpp"
#include "fusionnet/fusion.hpp"

using namespace fusionnet;
using namespace fusionnet::fusion;
using autodiff::Shape;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(autodiff::shape_size(shape));
  for (double& x : v) x = g(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::from({n, n}, std::move(v));
}

FusionConfig small_config(FusionMode mode, std::size_t n_channels = 2) {
  FusionConfig c;
  c.channel_bins.assign(n_channels, 12);
  c.channel_bins[0] = 16;
  c.frames = 14;
  c.scale.kernels_l1 = 3;
  c.scale.kernels_l2 = 4;
  c.scale.head_depth = 2;
  c.scale.head_width = 6;
  c.scale.n_classes = 5;
  c.scale.common_bins = 12;
  c.mode = mode;
  c.dropout = 0.0;
  c.seed = 4;
  return c;
}

std::vector<Tensor> random_inputs(const FusionConfig& c, std::mt19937_64& rng) {
  std::vector<Tensor> in;
  for (std::size_t bins : c.channel_bins) in.push_back(random_tensor({bins, c.frames}, rng));
  return in;
}

}  // namespace

TEST(SimilarityScore, Examples) {
  const std::vector<double> a{0.3, -1.2, 5.0};
  EXPECT_EQ(similarity_score(a, a), 1.0);
  const std::vector<double> o{0.0, 0.0}, p{3.0, 4.0};
  EXPECT_NEAR(similarity_score(o, p), 1.0 / 6.0, 1e-15);
  const std::vector<double> z{0.0}, one{1.0};
  EXPECT_EQ(similarity_score(z, one), 0.5);
  EXPECT_THROW(similarity_score(a, o), DataError);
  const std::vector<double> x{1.0, 2.0}, y{1.0, std::nextafter(2.0, 3.0)};
  EXPECT_LT(similarity_score(x, y), 1.0);
  const Tensor fx = Tensor::from({2, 1}, x), fy = Tensor::from({2, 1}, y);
  EXPECT_LT(build_similarity_matrix(fx, fy).data.item(), 1.0);
}

TEST(SimilarityScore, BoundedAndOneOnlyForEqualFrames) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<double> a(1 + rng() % 10), b(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = g(rng);
      b[i] = rng() % 4 == 0 ? a[i] : g(rng);
    }
    const double s = similarity_score(a, b);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
    EXPECT_EQ(s == 1.0, a == b);
  }
}

TEST(SimilarityMatrix, ShapeDiagonalAndOracle) {
  std::mt19937_64 rng(2);
  EXPECT_EQ(build_similarity_matrix(random_tensor({6, 4}, rng), random_tensor({6, 3}, rng)).data.shape(),
            (Shape{4, 3}));
  const Tensor f = random_tensor({5, 7}, rng);
  const SimilarityMatrix self = build_similarity_matrix(f, f);
  for (std::size_t x = 0; x < 7; ++x) EXPECT_EQ(self.data[x * 7 + x], 1.0);

  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng() % 6, ti = 1 + rng() % 8, tj = 1 + rng() % 8;
    const Tensor fi = random_tensor({b, ti}, rng), fj = random_tensor({b, tj}, rng);
    const SimilarityMatrix s = build_similarity_matrix(fi, fj, 0, 1);
    for (std::size_t x = 0; x < ti; ++x) {
      for (std::size_t y = 0; y < tj; ++y) {
        std::vector<double> a(b), c(b);
        for (std::size_t r = 0; r < b; ++r) {
          a[r] = fi[r * ti + x];
          c[r] = fj[r * tj + y];
        }
        double d2 = 0.0;
        for (std::size_t r = 0; r < b; ++r) d2 += (a[r] - c[r]) * (a[r] - c[r]);
        ASSERT_NEAR(s.data[x * tj + y], 1.0 / (1.0 + std::sqrt(d2)), 1e-12);
      }
    }
  }
}

TEST(SimilarityMatrix, SwappingChannelsTransposes) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng() % 6, ti = 1 + rng() % 8, tj = 1 + rng() % 8;
    const Tensor fi = random_tensor({b, ti}, rng), fj = random_tensor({b, tj}, rng);
    const Tensor s = build_similarity_matrix(fi, fj).data, t = build_similarity_matrix(fj, fi).data;
    for (std::size_t x = 0; x < ti; ++x)
      for (std::size_t y = 0; y < tj; ++y) ASSERT_EQ(s[x * tj + y], t[y * ti + x]);
  }
  EXPECT_THROW(build_similarity_matrix(random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)), DataError);
}

TEST(AttentiveMaps, OnesPropagateThroughIdentity) {
  const SimilarityMatrix s{Tensor::full({4, 4}, 1.0), {0, 1}};
  const auto [fi, fj] = attentive_maps(s, {identity(4), identity(4), true});
  for (double v : fi.values()) EXPECT_EQ(v, 1.0);
  for (double v : fj.values()) EXPECT_EQ(v, 1.0);
}

TEST(AttentiveMaps, SingleEntrySelectsWeightColumn) {
  std::mt19937_64 rng(4);
  const std::size_t ti = 5, tj = 3, b = 4;
  std::vector<double> sv(ti * tj, 0.0);
  const std::size_t x = 2, y = 1;
  sv[x * tj + y] = 0.4;
  const SimilarityMatrix s{Tensor::from({ti, tj}, sv), {0, 1}};
  const Tensor wi = random_tensor({b, tj}, rng), wj = random_tensor({b, ti}, rng);
  const auto [fi, fj] = attentive_maps(s, {wi, wj, false});
  ASSERT_EQ(fi.shape(), (Shape{b, ti}));
  ASSERT_EQ(fj.shape(), (Shape{b, tj}));
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t c = 0; c < ti; ++c) EXPECT_DOUBLE_EQ(fi[r * ti + c], c == x ? 0.4 * wi[r * tj + y] : 0.0);
    for (std::size_t c = 0; c < tj; ++c) EXPECT_DOUBLE_EQ(fj[r * tj + c], c == y ? 0.4 * wj[r * ti + x] : 0.0);
  }
  EXPECT_THROW(attentive_maps(s, {wj, wi, false}), DataError);
}

TEST(EarlyFuse, StacksRepresentativeAndAttentiveMaps) {
  std::mt19937_64 rng(5);
  const Tensor fi = random_tensor({40, 32}, rng), fj = random_tensor({40, 32}, rng);
  const auto [si, sj] = early_fuse(fi, fj, {random_tensor({40, 32}, rng), random_tensor({40, 32}, rng), true});
  EXPECT_EQ(si.shape(), (Shape{2, 40, 32}));
  EXPECT_EQ(sj.shape(), (Shape{2, 40, 32}));
  for (std::size_t i = 0; i < fi.size(); ++i) {
    ASSERT_EQ(si[i], fi[i]);
    ASSERT_EQ(sj[i], fj[i]);
  }
  const auto [zi, zj] = early_fuse(fi, fj, {Tensor::zeros({40, 32}), Tensor::zeros({40, 32}), true});
  for (std::size_t i = fi.size(); i < zi.size(); ++i) ASSERT_EQ(zi[i], 0.0);
}

TEST(InteractionScore, BilinearForm) {
  std::vector<double> e1(6, 0.0);
  e1[0] = 1.0;
  const Tensor e = Tensor::from({6}, e1);
  EXPECT_EQ(interaction_score(e, e, {identity(6)}).item(), 1.0);

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 1 + rng() % 10;
    const Tensor a = random_tensor({d}, rng), b = random_tensor({d}, rng), w = random_tensor({d, d}, rng);
    double dot = 0.0, bil = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += a[i] * b[i];
      for (std::size_t j = 0; j < d; ++j) bil += a[i] * w[i * d + j] * b[j];
    }
    ASSERT_NEAR(interaction_score(a, b, {identity(d)}).item(), dot, 1e-12);
    ASSERT_NEAR(interaction_score(a, b, {w}).item(), bil, 1e-10 * std::max(1.0, std::abs(bil)));
  }
  EXPECT_THROW(interaction_score(Tensor::zeros({3}), Tensor::zeros({4}), {identity(3)}), DataError);
}

TEST(LateFuse, LengthFollowsChannelAndPairCounts) {
  auto outputs = [](std::size_t n, std::size_t d) {
    std::vector<ChannelOutput> o;
    for (std::size_t c = 0; c < n; ++c) o.push_back({Tensor(), Tensor::full({d}, 0.1 * (c + 1)), c});
    return o;
  };
  const InteractionMatrix w2{identity(3)}, w3{identity(4)};
  EXPECT_EQ(late_fuse(outputs(2, 3), &w2).size(), 7u);
  EXPECT_EQ(late_fuse(outputs(3, 4), &w3).size(), 15u);
  EXPECT_EQ(late_fuse(outputs(3, 4), nullptr).size(), 12u);
  const Tensor fused = late_fuse(outputs(2, 3), &w2);
  EXPECT_NEAR(fused[6], 3 * 0.1 * 0.2, 1e-15);
}

TEST(FusionModel, ParameterSetsPerMode) {
  const FusionModel vanilla(small_config(FusionMode::kVanilla));
  const FusionModel hybrid(small_config(FusionMode::kHybrid));
  for (const auto& [name, _] : vanilla.parameters().entries()) {
    EXPECT_EQ(name.find("attn"), std::string::npos) << name;
    EXPECT_EQ(name.find("interaction"), std::string::npos) << name;
  }
  EXPECT_TRUE(hybrid.parameters().contains("attn.W_i"));
  EXPECT_TRUE(hybrid.parameters().contains("attn.W_j"));
  EXPECT_TRUE(hybrid.parameters().contains("interaction.W"));
  EXPECT_TRUE(hybrid.parameters().contains("proj.ch0"));
  EXPECT_FALSE(hybrid.parameters().contains("proj.ch1"));
  EXPECT_EQ(hybrid.parameters().get("interaction.W").shape(), (Shape{7, 7}));

  FusionConfig unshared = small_config(FusionMode::kEarlyFusion, 3);
  unshared.share_attention = false;
  const FusionModel ef(unshared);
  for (const char* p : {"attn.p0_1.W_i", "attn.p0_2.W_j", "attn.p1_2.W_i"}) EXPECT_TRUE(ef.parameters().contains(p));
  EXPECT_FALSE(ef.parameters().contains("attn.W_i"));
}

TEST(FusionModel, ConvStackIsSharedAcrossChannels) {
  const FusionModel m(small_config(FusionMode::kVanilla, 3));
  std::size_t conv_tensors = 0;
  for (const auto& [name, _] : m.parameters().entries()) conv_tensors += name.starts_with("conv");
  EXPECT_EQ(conv_tensors, 2u);
  std::mt19937_64 rng(7);
  auto in = random_inputs(m.config(), rng);
  in[2] = in[1];
  const auto outs = m.channel_outputs(in);
  ASSERT_EQ(outs.size(), 3u);
  for (std::size_t i = 0; i < outs[1].pooled.size(); ++i) EXPECT_EQ(outs[1].pooled[i], outs[2].pooled[i]);
  EXPECT_EQ(outs[0].pooled.size(), m.pooled_dim());
}

TEST(FusionModel, OutputsAreClassProbabilities) {
  std::mt19937_64 rng(8);
  for (FusionMode mode : kAllModes) {
    for (std::size_t n : {2u, 3u}) {
      const FusionModel m(small_config(mode, n));
      const Tensor y = m.forward(random_inputs(m.config(), rng), false);
      ASSERT_EQ(y.size(), 5u);
      for (double p : y.values()) {
        EXPECT_GT(p, 0.0);
        EXPECT_LT(p, 1.0);
      }
    }
  }
}

TEST(FusionModel, ZeroInputGivesOneHalfWithoutEarlyFusion) {
  for (FusionMode mode : {FusionMode::kVanilla, FusionMode::kLateFusion}) {
    const FusionModel m(small_config(mode));
    std::vector<Tensor> in;
    for (std::size_t bins : m.config().channel_bins) in.push_back(Tensor::zeros({bins, m.config().frames}));
    const Tensor y = m.forward(in, false);
    for (double p : y.values()) EXPECT_EQ(p, 0.5);
  }
}

TEST(FusionModel, EarlyFusionWithZeroAttentionMatchesVanilla) {
  std::mt19937_64 rng(9);
  const FusionModel vanilla(small_config(FusionMode::kVanilla));
  FusionModel ef(small_config(FusionMode::kEarlyFusion));
  for (const char* name : {"attn.W_i", "attn.W_j"}) {
    for (double& v : ef.parameters().get(name).mutable_values()) v = 0.0;
  }
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = random_inputs(vanilla.config(), rng);
    const Tensor a = vanilla.forward(in, false), b = ef.forward(in, false);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  }
}

TEST(FusionModel, DropoutOnlyActsInTrainMode) {
  FusionConfig c = small_config(FusionMode::kHybrid);
  c.dropout = 0.5;
  const FusionModel m(c);
  std::mt19937_64 rng(10);
  const auto in = random_inputs(c, rng);
  const Tensor e1 = m.forward(in, false, 1), e2 = m.forward(in, false, 2);
  const Tensor t1 = m.forward(in, true, 1), t1b = m.forward(in, true, 1);
  for (std::size_t i = 0; i < e1.size(); ++i) {
    EXPECT_EQ(e1[i], e2[i]);
    EXPECT_EQ(t1[i], t1b[i]);
  }
}

TEST(FusionModel, RejectsBadInputs) {
  const FusionModel m(small_config(FusionMode::kHybrid));
  std::mt19937_64 rng(11);
  auto in = random_inputs(m.config(), rng);
  in.pop_back();
  EXPECT_THROW(m.forward(in, false), DataError);
  in.push_back(random_tensor({12, 13}, rng));
  EXPECT_THROW(m.forward(in, false), DataError);
  EXPECT_THROW(FusionModel(small_config(FusionMode::kLateFusion, 1)), UsageError);
  FusionConfig tiny = small_config(FusionMode::kVanilla);
  tiny.frames = 6;
  EXPECT_THROW(FusionModel{tiny}, UsageError);
}

TEST(FusionModel, InitIsSeededAndLoadValidatesTensors) {
  const FusionModel a(small_config(FusionMode::kHybrid)), b(small_config(FusionMode::kHybrid));
  FusionConfig other = small_config(FusionMode::kHybrid);
  other.seed = 5;
  FusionModel c(other);
  const auto& ea = a.parameters().entries();
  const auto& ec = c.parameters().entries();
  for (std::size_t i = 0; i < ea.size(); ++i) {
    const auto va = ea[i].second.values(), vb = b.parameters().entries()[i].second.values();
    EXPECT_TRUE(std::equal(va.begin(), va.end(), vb.begin())) << ea[i].first;
  }

  c.load(ea);
  for (std::size_t i = 0; i < ea.size(); ++i) {
    EXPECT_TRUE(std::equal(ea[i].second.values().begin(), ea[i].second.values().end(),
                           ec[i].second.values().begin()));
  }

  auto missing = ea;
  missing.erase(missing.begin() + 1);
  try {
    c.load(missing);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(ea[1].first), std::string::npos);
  }
  auto wrong_shape = ea;
  wrong_shape[2].second = Tensor::zeros({1});
  EXPECT_THROW(c.load(wrong_shape), DataError);

  FusionModel vanilla(small_config(FusionMode::kVanilla));
  auto extra = vanilla.parameters().entries();
  extra.emplace_back("interaction.W", Tensor::zeros({7, 7}));
  try {
    vanilla.load(extra);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("unexpected tensor"), std::string::npos);
  }
}

TEST(FusionMode, NamesRoundTrip) {
  for (FusionMode m : kAllModes) EXPECT_EQ(parse_fusion_mode(to_string(m)), m);
  EXPECT_EQ(parse_fusion_mode("hybrid"), FusionMode::kHybrid);
  EXPECT_THROW(parse_fusion_mode("mid"), UsageError);
}

TEST(ToInput, TransposesFramesIntoColumns) {
  FeatureMap fm;
  fm.n_frames = 3;
  fm.n_bins = 2;
  fm.data = {1, 2, 3, 4, 5, 6};
  const Tensor t = to_input(fm);
  EXPECT_EQ(t.shape(), (Shape{2, 3}));
  EXPECT_EQ(std::vector<double>(t.values().begin(), t.values().end()), (std::vector<double>{1, 3, 5, 2, 4, 6}));
}
