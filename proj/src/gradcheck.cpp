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

#include "fusionnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>

#include "fusionnet/fusion.hpp"

namespace fusionnet::gradcheck {

namespace ad = autodiff;
using ad::Tensor;

bool Report::passed() const {
  return std::all_of(groups.begin(), groups.end(), [](const GroupResult& g) { return g.passed; });
}

std::vector<std::string> Report::failing() const {
  std::vector<std::string> out;
  for (const GroupResult& g : groups) {
    if (!g.passed) out.push_back(g.group);
  }
  return out;
}

GroupResult check(const std::string& group, const std::function<Tensor()>& loss, std::vector<Tensor> wrt,
                  double tolerance, double step) {
  for (Tensor& t : wrt) t.zero_grad();
  ad::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : wrt) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GroupResult r{group, "", 0, 0.0, true};
  for (std::size_t k = 0; k < wrt.size(); ++k) {
    auto values = wrt[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss().item();
      values[i] = saved - step;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k][i];
      r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
      ++r.checked;
    }
  }
  r.passed = r.max_rel_error <= tolerance && std::isfinite(r.max_rel_error);
  return r;
}

namespace {

class Random {
 public:
  explicit Random(std::uint64_t seed) : rng_(seed) {}

  Tensor tensor(ad::Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(ad::shape_size(shape));
    for (double& x : v) x = u(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }

  // Magnitudes in [0.2, 1] with random sign, clear of the relu kink.
  Tensor away_from_zero(ad::Shape shape) {
    std::uniform_real_distribution<double> u(0.2, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<double> v(ad::shape_size(shape));
    for (double& x : v) x = sign(rng_) ? u(rng_) : -u(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }

  Tensor constant(ad::Shape shape) {
    Tensor t = tensor(std::move(shape));
    return Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Random linear read-out so every output entry gets a distinct upstream gradient.
Tensor readout(const Tensor& y, const Tensor& weights) { return ad::sum(ad::mul(y, weights)); }

void primitives(Report& report, Random& rnd) {
  const double tol = report.tolerance;
  auto add = [&](const std::string& op, const std::function<Tensor()>& f, std::vector<Tensor> wrt) {
    report.groups.push_back(check("op:" + op, f, std::move(wrt), tol));
  };

  {
    Tensor x = rnd.tensor({2, 6, 7}), k = rnd.tensor({3, 2, 3, 3}), r = rnd.constant({3, 4, 5});
    add("conv2d", [=] { return readout(ad::conv2d(x, k), r); }, {x, k});
  }
  {
    // Distinct values spaced well beyond the finite-difference step.
    std::vector<double> v(2 * 6 * 6);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i);
    std::shuffle(v.begin(), v.end(), rnd.engine());
    Tensor x = Tensor::from({2, 6, 6}, v, true), r = rnd.constant({2, 3, 3});
    add("max_pool2d", [=] { return readout(ad::max_pool2d(x), r); }, {x});
  }
  {
    Tensor x = rnd.tensor({3, 4, 5}), r = rnd.constant({3});
    add("global_avg_pool", [=] { return readout(ad::global_avg_pool(x), r); }, {x});
  }
  {
    Tensor x = rnd.tensor({5}), w = rnd.tensor({4, 5}), b = rnd.tensor({4}), r = rnd.constant({4});
    add("dense", [=] { return readout(ad::dense(x, w, b), r); }, {x, w, b});
  }
  {
    Tensor x = rnd.away_from_zero({3, 4}), r = rnd.constant({3, 4});
    add("relu", [=] { return readout(ad::relu(x), r); }, {x});
  }
  {
    Tensor x = rnd.tensor({3, 4}, -3.0, 3.0), r = rnd.constant({3, 4});
    add("sigmoid", [=] { return readout(ad::sigmoid(x), r); }, {x});
  }
  {
    Tensor a = rnd.tensor({3, 4}), b = rnd.tensor({4, 2}), r = rnd.constant({3, 2});
    add("matmul", [=] { return readout(ad::matmul(a, b), r); }, {a, b});
  }
  {
    Tensor a = rnd.tensor({3, 4}), r = rnd.constant({4, 3});
    add("transpose", [=] { return readout(ad::transpose(a), r); }, {a});
  }
  {
    Tensor a = rnd.tensor({3, 4}), r = rnd.constant({2, 6});
    add("reshape", [=] { return readout(ad::reshape(a, {2, 6}), r); }, {a});
  }
  {
    Tensor a = rnd.tensor({2, 3}), b = rnd.tensor({2, 2}), r = rnd.constant({2, 5});
    add("concat", [=] {
      const Tensor parts[] = {a, b};
      return readout(ad::concat(parts, 1), r);
    }, {a, b});
  }
  {
    Tensor a = rnd.tensor({2, 3, 4}), b = rnd.tensor({3, 4}), r = rnd.constant({3, 3, 4});
    add("stack_channels", [=] {
      const Tensor parts[] = {a, b};
      return readout(ad::stack_channels(parts), r);
    }, {a, b});
  }
  {
    Tensor x = rnd.tensor({20}), r = rnd.constant({20});
    add("dropout", [=] { return readout(ad::dropout(x, 0.7, 99, true), r); }, {x});
  }
  {
    Tensor a = rnd.tensor({3, 2}), b = rnd.tensor({3, 2}), r = rnd.constant({3, 2});
    add("add", [=] { return readout(ad::add(a, b), r); }, {a, b});
    add("sub", [=] { return readout(ad::sub(a, b), r); }, {a, b});
    add("mul", [=] { return readout(ad::mul(a, b), r); }, {a, b});
    add("scale", [=] { return readout(ad::scale(a, -1.7), r); }, {a});
    add("square", [=] { return readout(ad::square(a), r); }, {a});
    add("sum", [=] { return ad::scale(ad::sum(a), 0.3); }, {a});
    add("mean", [=] { return ad::scale(ad::mean(a), 0.3); }, {a});
  }
  {
    Tensor fi = rnd.tensor({4, 5}), fj = rnd.tensor({4, 3}), r = rnd.constant({5, 3});
    add("similarity_matrix", [=] { return readout(ad::similarity_matrix(fi, fj), r); }, {fi, fj});
  }
  {
    Tensor p = rnd.tensor({5}, 0.05, 0.95);
    const std::vector<double> target = {1.0, 0.0, 1.0, 1.0, 0.0};
    add("binary_cross_entropy", [=] { return ad::binary_cross_entropy(p, target); }, {p});
  }
}

void toy_model(Report& report, std::uint64_t seed) {
  fusion::FusionConfig cfg;
  cfg.channel_bins = {10, 8};
  cfg.frames = 10;
  cfg.scale.kernels_l1 = 2;
  cfg.scale.kernels_l2 = 2;
  cfg.scale.head_depth = 2;
  cfg.scale.head_width = 5;
  cfg.scale.n_classes = 3;
  cfg.scale.common_bins = 10;
  cfg.mode = fusion::FusionMode::kHybrid;
  cfg.share_attention = false;
  cfg.dropout = 0.2;
  cfg.seed = seed;
  fusion::FusionModel model(cfg);

  Random rnd(ad::mix_seed(seed, 0x70f));
  const std::vector<Tensor> inputs = {rnd.constant({10, 10}), rnd.constant({8, 10})};
  const std::vector<double> target = {1.0, 0.0, 1.0};
  auto loss = [&] { return ad::binary_cross_entropy(model.forward(inputs, true, 17), target); };

  for (auto& [name, tensor] : model.parameters().entries()) {
    GroupResult g = check("model:" + name, loss, {tensor}, report.tolerance);
    if (name.ends_with(".W_i")) g.alias = "W_i";
    if (name.ends_with(".W_j")) g.alias = "W_j";
    if (name == "interaction.W") g.alias = "W";
    report.groups.push_back(std::move(g));
  }
}

}  // namespace

Report run(std::uint64_t seed, double tolerance) {
  Report report;
  report.tolerance = tolerance;
  Random rnd(seed);
  primitives(report, rnd);
  toy_model(report, seed);
  return report;
}

void write_report(std::ostream& out, const Report& report) {
  char line[160];
  for (const GroupResult& g : report.groups) {
    const std::string label = g.alias.empty() ? g.group : g.group + " (" + g.alias + ")";
    std::snprintf(line, sizeof line, "%-36s %5zu  max_rel_err %.3e  %s\n", label.c_str(), g.checked,
                  g.max_rel_error, g.passed ? "ok" : "FAIL");
    out << line;
  }
  if (report.passed()) {
    out << "gradcheck passed (tolerance " << report.tolerance << ")\n";
  } else {
    out << "gradcheck FAILED:";
    for (const std::string& name : report.failing()) out << ' ' << name;
    out << '\n';
  }
}

}  // namespace fusionnet::gradcheck
