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

#include "fusionnet/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>

#include "fusionnet/error.hpp"

namespace fusionnet::training {

namespace ad = autodiff;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw UsageError("learning rate must be >= 0");
  if (batch_size == 0) throw UsageError("batch size must be positive");
  if (epochs == 0) throw UsageError("epoch count must be positive");
  if (!(l2 >= 0.0)) throw UsageError("L2 coefficient must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must be in [0, 1)");
}

Tensor bce_loss(const Tensor& pred, std::span<const double> target) { return ad::binary_cross_entropy(pred, target); }

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw DataError("mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

bool is_penalised(std::string_view name) { return !name.ends_with("bias"); }

Tensor l2_penalty(const ad::ParameterStore& params, double coeff) {
  std::vector<Tensor> terms;
  for (const auto& [name, t] : params.entries()) {
    if (is_penalised(name)) terms.push_back(ad::sum(ad::square(t)));
  }
  if (terms.empty()) return Tensor::scalar(0.0);
  return ad::scale(ad::sum(ad::concat(terms, 0)), coeff);
}

void adam_step(AdamState& state, ad::ParameterStore& params, double lr) {
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (const auto& e : entries) {
      state.m.emplace_back(e.second.size(), 0.0);
      state.v.emplace_back(e.second.size(), 0.0);
    }
  }
  if (state.m.size() != entries.size()) throw UsageError("Adam state does not match the parameter set");
  for (const auto& [name, t] : entries) {
    if (!t.has_grad()) throw DataError("parameter " + name + " has no gradient");
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in " + name);
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& t = entries[k].second;
    auto values = t.mutable_values();
    const auto grad = t.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double batch_objective(const fusion::FusionModel& model, std::span<const Sample> data,
                       std::span<const std::size_t> batch, double l2, std::uint64_t dropout_seed, bool train_mode) {
  double total = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Sample& s = data[batch[k]];
    const Tensor pred = model.forward(s.inputs, train_mode, ad::mix_seed(dropout_seed, k));
    total += bce_loss(pred, s.target).item();
  }
  return total / static_cast<double>(batch.size()) + l2_penalty(model.parameters(), l2).item();
}

std::vector<CurvePoint> train(fusion::FusionModel& model, std::span<const Sample> data, const TrainConfig& cfg,
                              const TrainHooks* hooks) {
  cfg.validate();
  if (data.empty()) throw DataError("training set is empty");
  if (model.config().dropout != cfg.dropout) {
    throw UsageError("model dropout does not match the training configuration");
  }
  auto& params = model.parameters();
  AdamState adam;
  std::vector<CurvePoint> curve;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::size_t iteration = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(ad::mix_seed(cfg.seed, 0x5eed0000ULL + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const std::uint64_t dropout_seed = ad::mix_seed(cfg.seed, 0xd0000000ULL + iteration);
      const double inv_b = 1.0 / static_cast<double>(batch.size());

      params.zero_grad();
      CurvePoint point{iteration, epoch, 0.0, 0.0};
      try {
        for (std::size_t k = 0; k < batch.size(); ++k) {
          const Sample& s = data[batch[k]];
          const Tensor pred = model.forward(s.inputs, true, ad::mix_seed(dropout_seed, k));
          const Tensor loss = bce_loss(pred, s.target);
          point.bce_loss += loss.item() * inv_b;
          point.mse += mse(pred.values(), s.target) * inv_b;
          ad::backward(ad::scale(loss, inv_b));
        }
        if (cfg.l2 > 0.0) ad::backward(l2_penalty(params, cfg.l2));
        if (!std::isfinite(point.bce_loss)) throw NumericalError("loss is not finite");

        const StepInfo info{iteration, epoch, batch, dropout_seed};
        if (hooks && hooks->before_step) hooks->before_step(info);
        adam_step(adam, params, cfg.learning_rate);
        if (hooks && hooks->after_step) hooks->after_step(info);
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at iteration " + std::to_string(iteration) + ": " + e.what());
      }
      curve.push_back(point);
      ++iteration;
    }
  }
  return curve;
}

double epoch_mean_loss(std::span<const CurvePoint> curve, std::size_t epoch) {
  double total = 0.0;
  std::size_t count = 0;
  for (const CurvePoint& p : curve) {
    if (p.epoch == epoch) {
      total += p.bce_loss;
      ++count;
    }
  }
  if (count == 0) throw UsageError("curve has no iterations in epoch " + std::to_string(epoch));
  return total / static_cast<double>(count);
}

std::vector<double> segment_vote(std::span<const std::vector<double>> per_segment) {
  if (per_segment.empty()) throw DataError("segment_vote needs at least one segment");
  std::vector<double> out(per_segment.front().size(), 0.0);
  for (const auto& p : per_segment) {
    if (p.size() != out.size()) throw DataError("segment_vote: segments disagree on class count");
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += p[c];
  }
  for (double& v : out) v /= static_cast<double>(per_segment.size());
  return out;
}

std::vector<double> predict(const fusion::FusionModel& model, std::span<const std::vector<Tensor>> segments) {
  std::vector<std::vector<double>> probs;
  probs.reserve(segments.size());
  for (const auto& inputs : segments) {
    const Tensor out = model.forward(inputs, false);
    probs.emplace_back(out.values().begin(), out.values().end());
  }
  return segment_vote(probs);
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "iteration,bce_loss,mse\n";
  char buf[96];
  for (const CurvePoint& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g\n", p.iteration, p.bce_loss, p.mse);
    out << buf;
  }
}

}  // namespace fusionnet::training
