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

#ifndef FUSIONNET_AUTODIFF_HPP_
#define FUSIONNET_AUTODIFF_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Minimal reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tensor is a handle to a graph node. Ops record their inputs and a
// backward rule on the node they create, so the graph is exactly the set of
// nodes reachable from a result; backward() orders that set topologically
// and runs the rules in reverse. A graph belongs to one thread at a time.
//
// Gradient semantics: leaf tensors accumulate (+=) across backward() calls
// until zero_grad(); intermediate nodes get fresh gradients on every pass.
namespace fusionnet::autodiff {

using Shape = std::vector<std::size_t>;

struct Node {
  std::string op;
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `self.grad`, accumulates into the inputs' grads.
  std::function<void(Node& self)> backward;

  bool is_leaf() const { return inputs.empty(); }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const double> values() const { return node_->value; }
  // Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  const std::string& op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

std::size_t shape_size(const Shape& shape);

// ---- ops -------------------------------------------------------------------

// Valid cross-correlation, stride 1. input [C_in x H x W], kernels [C_out x C_in x kH x kW].
Tensor conv2d(const Tensor& input, const Tensor& kernels);
// 2x2 window, stride 2; gradient goes to the first row-major maximum.
Tensor max_pool2d(const Tensor& input);
// [C x H x W] -> [C]
Tensor global_avg_pool(const Tensor& input);
// weights [m x n] * input [n] + bias [m]
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
// [H x W] maps become one channel each; [C x H x W] blocks keep their channels.
Tensor stack_channels(std::span<const Tensor> maps);
// Inverted dropout: kept units scaled by 1/keep_prob. Identity when !train.
Tensor dropout(const Tensor& x, double keep_prob, std::uint64_t seed, bool train);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor square(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Pairwise column similarity 1 / (1 + ||fi[:,x] - fj[:,y]||_2).
// fi [b x t_i], fj [b x t_j] -> [t_i x t_j]
Tensor similarity_matrix(const Tensor& fi, const Tensor& fj);
// Mean over classes of -[y log p + (1-y) log(1-p)] with p clamped to [1e-7, 1-1e-7].
// `target` is treated as a constant.
Tensor binary_cross_entropy(const Tensor& pred, std::span<const double> target);

inline constexpr double kBceClamp = 1e-7;

// loss must be a single-element tensor.
void backward(const Tensor& loss);

// ---- parameters ------------------------------------------------------------

// Ordered, named set of trainable tensors. Insertion order is the checkpoint order.
class ParameterStore {
 public:
  Tensor& add(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Deterministic per-name generator: same (seed, name) gives the same stream
// whatever else the model contains.
std::mt19937_64 rng_for(std::uint64_t seed, std::string_view name);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out)))
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

// Checkpoint: "FUSN", version u16, count u32, then per tensor
// {name len u32, name bytes, rank u32, dims u32..., float64 values}; all little-endian.
inline constexpr std::uint16_t kCheckpointVersion = 1;
std::vector<std::uint8_t> encode_checkpoint(const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path);

namespace testing {
// Scales the upstream gradient of every node whose op equals `op` by 1.5
// before its backward rule runs. Empty string disables the fault.
void inject_backward_fault(std::string op);
const std::string& injected_backward_fault();
}  // namespace testing

}  // namespace fusionnet::autodiff

#endif  // FUSIONNET_AUTODIFF_HPP_
