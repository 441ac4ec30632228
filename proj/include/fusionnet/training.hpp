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

#ifndef FUSIONNET_TRAINING_HPP_
#define FUSIONNET_TRAINING_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "fusionnet/autodiff.hpp"
#include "fusionnet/fusion.hpp"

namespace fusionnet::training {

using autodiff::Tensor;

// Defaults are the fusion-layer hyper-parameters.
struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 100;
  std::size_t epochs = 10;
  double l2 = 0.005;
  double dropout = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CurvePoint {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  double bce_loss = 0.0;  // batch mean, without the L2 term
  double mse = 0.0;       // batch mean of per-class squared error
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One training example: a segment per channel plus its multi-hot target.
struct Sample {
  std::vector<Tensor> inputs;
  std::vector<double> target;
};

Tensor bce_loss(const Tensor& pred, std::span<const double> target);
double mse(std::span<const double> pred, std::span<const double> target);

// Biases are not penalised.
bool is_penalised(std::string_view parameter_name);
// coeff * sum ||w||^2 over penalised tensors.
Tensor l2_penalty(const autodiff::ParameterStore& params, double coeff);

// Bias-corrected Adam on every parameter. Throws DataError if a parameter has
// no gradient and NumericalError on a non-finite gradient.
void adam_step(AdamState& state, autodiff::ParameterStore& params, double lr);

struct StepInfo {
  std::size_t iteration = 0;
  std::size_t epoch = 0;
  std::span<const std::size_t> batch;
  // Sample k of the batch used dropout seed mix_seed(dropout_seed, k).
  std::uint64_t dropout_seed = 0;
};

struct TrainHooks {
  // Called with gradients populated, before the parameter update.
  std::function<void(const StepInfo&)> before_step;
  std::function<void(const StepInfo&)> after_step;
};

// Mini-batch Adam on mean BCE + L2. Deterministic for a fixed cfg.seed.
std::vector<CurvePoint> train(fusion::FusionModel& model, std::span<const Sample> data, const TrainConfig& cfg,
                              const TrainHooks* hooks = nullptr);

// Mean over batch of BCE + L2 at the current parameters, without touching gradients.
double batch_objective(const fusion::FusionModel& model, std::span<const Sample> data,
                       std::span<const std::size_t> batch, double l2, std::uint64_t dropout_seed, bool train_mode);

// Mean of epoch `epoch`'s bce_loss over its iterations.
double epoch_mean_loss(std::span<const CurvePoint> curve, std::size_t epoch);

// Arithmetic mean of per-segment probability vectors.
std::vector<double> segment_vote(std::span<const std::vector<double>> per_segment);

// Clip-level probabilities from a clip's segments (one input list per segment).
std::vector<double> predict(const fusion::FusionModel& model, std::span<const std::vector<Tensor>> segments);

// "iteration,bce_loss,mse" with 12 significant digits, LF endings.
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);

}  // namespace fusionnet::training

#endif  // FUSIONNET_TRAINING_HPP_
