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

#include "fusionnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fusionnet/error.hpp"
#include "fusionnet/kernels.hpp"

namespace fusionnet::autodiff {

namespace kp = kernels::parallel;

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::string& fault_op() {
  static std::string op;
  return op;
}

void check_finite(const Node& n) {
  for (double v : n.value) {
    if (!std::isfinite(v)) throw NumericalError("non-finite value produced by " + n.op);
  }
}

Tensor make_result(std::string op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->op = std::move(op);
  node->shape = std::move(shape);
  node->value = std::move(value);
  check_finite(*node);
  for (const Tensor& t : inputs) {
    node->requires_grad = node->requires_grad || t.requires_grad();
    node->inputs.push_back(t.node());
  }
  if (node->requires_grad) node->backward = std::move(rule);
  return Tensor(std::move(node));
}

// Gradient buffer of input k, or nullptr when that input does not need one.
double* grad_of(Node& self, std::size_t k) {
  Node& in = *self.inputs[k];
  return in.requires_grad ? in.grad.data() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DataError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                    shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (values.size() != shape_size(shape)) {
    throw DataError("tensor of shape " + shape_to_string(shape) + " given " + std::to_string(values.size()) +
                    " values");
  }
  auto node = std::make_shared<Node>();
  node->op = "leaf";
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  check_finite(*node);
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw DataError("item() on a tensor of shape " + shape_to_string(shape()));
  return node_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.size() != node_->value.size()) node_->grad.assign(node_->value.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

// ---- ops -------------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernels) {
  if (input.rank() != 3 || kernels.rank() != 4 || kernels.dim(1) != input.dim(0) ||
      kernels.dim(2) > input.dim(1) || kernels.dim(3) > input.dim(2)) {
    throw DataError("conv2d: input " + shape_to_string(input.shape()) + " incompatible with kernels " +
                    shape_to_string(kernels.shape()));
  }
  kernels::Conv2dShape s{input.dim(0), input.dim(1), input.dim(2), kernels.dim(0), kernels.dim(2), kernels.dim(3)};
  std::vector<double> out(s.out_channels * s.out_height() * s.out_width());
  kp::conv2d_forward(s, input.values(), kernels.values(), out);
  return make_result("conv2d", {s.out_channels, s.out_height(), s.out_width()}, std::move(out), {input, kernels},
                     [s](Node& self) {
                       if (double* gi = grad_of(self, 0)) {
                         kp::conv2d_backward_input(s, self.grad, self.inputs[1]->value,
                                                   {gi, self.inputs[0]->value.size()});
                       }
                       if (double* gk = grad_of(self, 1)) {
                         kp::conv2d_backward_kernels(s, self.grad, self.inputs[0]->value,
                                                     {gk, self.inputs[1]->value.size()});
                       }
                     });
}

Tensor max_pool2d(const Tensor& input) {
  if (input.rank() != 3 || input.dim(1) < 2 || input.dim(2) < 2) {
    throw DataError("max_pool2d: needs [C x H x W] with H, W >= 2, got " + shape_to_string(input.shape()));
  }
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = c * (h / 2) * (w / 2);
  std::vector<double> out(n);
  std::vector<std::size_t> argmax(n);
  kp::max_pool2d_forward(c, h, w, input.values(), out, argmax);
  return make_result("max_pool2d", {c, h / 2, w / 2}, std::move(out), {input},
                     [argmax = std::move(argmax)](Node& self) {
                       double* gi = grad_of(self, 0);
                       for (std::size_t o = 0; o < argmax.size(); ++o) gi[argmax[o]] += self.grad[o];
                     });
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 3) throw DataError("global_avg_pool: needs [C x H x W], got " + shape_to_string(input.shape()));
  const std::size_t c = input.dim(0), area = input.dim(1) * input.dim(2);
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto v = input.values().subspan(ch * area, area);
    out[ch] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(area);
  }
  return make_result("global_avg_pool", {c}, std::move(out), {input}, [c, area](Node& self) {
    double* gi = grad_of(self, 0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = self.grad[ch] / static_cast<double>(area);
      for (std::size_t i = 0; i < area; ++i) gi[ch * area + i] += g;
    }
  });
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 1 || weights.rank() != 2 || bias.rank() != 1 || weights.dim(1) != input.dim(0) ||
      weights.dim(0) != bias.dim(0)) {
    throw DataError("dense: input " + shape_to_string(input.shape()) + ", weights " +
                    shape_to_string(weights.shape()) + ", bias " + shape_to_string(bias.shape()) + " do not agree");
  }
  const std::size_t m = weights.dim(0), n = weights.dim(1);
  std::vector<double> out(bias.values().begin(), bias.values().end());
  kp::gemm({m, n, 1, false, false, true}, weights.values(), input.values(), out);
  return make_result("dense", {m}, std::move(out), {input, weights, bias}, [m, n](Node& self) {
    if (double* gx = grad_of(self, 0)) {
      kp::gemm({n, m, 1, true, false, true}, self.inputs[1]->value, self.grad, {gx, n});
    }
    if (double* gw = grad_of(self, 1)) {
      kp::gemm({m, 1, n, false, false, true}, self.grad, self.inputs[0]->value, {gw, m * n});
    }
    if (double* gb = grad_of(self, 2)) {
      for (std::size_t i = 0; i < m; ++i) gb[i] += self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  return make_result("relu", x.shape(), std::move(out), {x}, [](Node& self) {
    double* gi = grad_of(self, 0);
    const auto& in = self.inputs[0]->value;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > 0.0) gi[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return make_result("sigmoid", x.shape(), std::move(out), {x}, [](Node& self) {
    double* gi = grad_of(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      const double y = self.value[i];
      gi[i] += self.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DataError("matmul: " + shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kp::gemm({m, k, n, false, false, false}, a.values(), b.values(), out);
  return make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    if (double* ga = grad_of(self, 0)) {
      kp::gemm({m, n, k, false, true, true}, self.grad, self.inputs[1]->value, {ga, m * k});
    }
    if (double* gb = grad_of(self, 1)) {
      kp::gemm({k, m, n, true, false, true}, self.inputs[0]->value, self.grad, {gb, k * n});
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DataError("transpose: needs a matrix, got " + shape_to_string(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  }
  return make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    double* gi = grad_of(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) gi[i * c + j] += self.grad[j * r + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DataError("reshape: cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  return make_result("reshape", std::move(shape), std::vector<double>(x.values().begin(), x.values().end()), {x},
                     [](Node& self) {
                       double* gi = grad_of(self, 0);
                       for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
                     });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw DataError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DataError("concat: axis out of range for " + shape_to_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) ok = d == axis || p.dim(d) == first[d];
    if (!ok) {
      throw DataError("concat: " + shape_to_string(p.shape()) + " does not match " + shape_to_string(first) +
                      " off axis " + std::to_string(axis));
    }
    out_shape[axis] += p.dim(axis);
  }
  const std::size_t outer = shape_size(Shape(first.begin(), first.begin() + static_cast<long>(axis)));
  const std::size_t inner = shape_size(Shape(first.begin() + static_cast<long>(axis) + 1, first.end()));
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) widths.push_back(p.dim(axis) * inner);
  const std::size_t row = std::accumulate(widths.begin(), widths.end(), std::size_t{0});

  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(parts[k].values().begin() + static_cast<long>(o * widths[k]), widths[k],
                  out.begin() + static_cast<long>(o * row + offset));
    }
    offset += widths[k];
  }
  return make_result("concat", std::move(out_shape), std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                     [outer, row, widths](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < widths.size(); ++k) {
                         if (double* gi = grad_of(self, k)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             for (std::size_t i = 0; i < widths[k]; ++i) {
                               gi[o * widths[k] + i] += self.grad[o * row + off + i];
                             }
                           }
                         }
                         off += widths[k];
                       }
                     });
}

Tensor stack_channels(std::span<const Tensor> maps) {
  std::vector<Tensor> blocks;
  blocks.reserve(maps.size());
  for (const Tensor& m : maps) {
    if (m.rank() == 2) {
      blocks.push_back(reshape(m, {1, m.dim(0), m.dim(1)}));
    } else if (m.rank() == 3) {
      blocks.push_back(m);
    } else {
      throw DataError("stack_channels: expected [H x W] or [C x H x W], got " + shape_to_string(m.shape()));
    }
  }
  return concat(blocks, 0);
}

Tensor dropout(const Tensor& x, double keep_prob, std::uint64_t seed, bool train) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw UsageError("dropout keep probability must be in (0, 1]");
  if (!train || keep_prob == 1.0) return x;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> mask(x.size());
  for (double& m : mask) m = u(rng) < keep_prob ? 1.0 / keep_prob : 0.0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return make_result("dropout", x.shape(), std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    double* gi = grad_of(self, 0);
    for (std::size_t i = 0; i < mask.size(); ++i) gi[i] += self.grad[i] * mask[i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (double* gi = grad_of(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (double* gb = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (double* ga = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
    }
    if (double* gb = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](Node& self) {
    double* gi = grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += self.grad[i] * factor;
  });
}

Tensor square(const Tensor& x) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (double& v : out) v *= v;
  return make_result("square", x.shape(), std::move(out), {x}, [](Node& self) {
    double* gi = grad_of(self, 0);
    const auto& in = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[i] += 2.0 * in[i] * self.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  const double total = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return make_result("sum", {1}, {total}, {x}, [](Node& self) {
    double* gi = grad_of(self, 0);
    const std::size_t n = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) gi[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  const double total = std::accumulate(x.values().begin(), x.values().end(), 0.0);
  return make_result("mean", {1}, {total / n}, {x}, [n](Node& self) {
    double* gi = grad_of(self, 0);
    const std::size_t count = self.inputs[0]->value.size();
    for (std::size_t i = 0; i < count; ++i) gi[i] += self.grad[0] / n;
  });
}

Tensor similarity_matrix(const Tensor& fi, const Tensor& fj) {
  if (fi.rank() != 2 || fj.rank() != 2 || fi.dim(0) != fj.dim(0)) {
    throw DataError("similarity_matrix: bin counts differ, " + shape_to_string(fi.shape()) + " vs " +
                    shape_to_string(fj.shape()));
  }
  const std::size_t b = fi.dim(0), ti = fi.dim(1), tj = fj.dim(1);
  std::vector<double> sim(ti * tj), dist(ti * tj);
  kp::similarity_forward(b, ti, tj, fi.values(), fj.values(), sim, dist);
  return make_result("similarity_matrix", {ti, tj}, std::move(sim), {fi, fj},
                     [b, ti, tj, dist = std::move(dist)](Node& self) {
                       std::vector<double> scratch_i, scratch_j;
                       double* gi = grad_of(self, 0);
                       double* gj = grad_of(self, 1);
                       if (!gi) scratch_i.assign(b * ti, 0.0), gi = scratch_i.data();
                       if (!gj) scratch_j.assign(b * tj, 0.0), gj = scratch_j.data();
                       kp::similarity_backward(b, ti, tj, self.inputs[0]->value, self.inputs[1]->value, self.value,
                                               dist, self.grad, {gi, b * ti}, {gj, b * tj});
                     });
}

Tensor binary_cross_entropy(const Tensor& pred, std::span<const double> target) {
  if (pred.size() != target.size()) {
    throw DataError("binary_cross_entropy: " + std::to_string(pred.size()) + " predictions for " +
                    std::to_string(target.size()) + " targets");
  }
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], kBceClamp, 1.0 - kBceClamp);
    loss -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
  }
  std::vector<double> y(target.begin(), target.end());
  return make_result("binary_cross_entropy", {1}, {loss / n}, {pred}, [n, y = std::move(y)](Node& self) {
    double* gi = grad_of(self, 0);
    const auto& pv = self.inputs[0]->value;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double p = pv[i];
      if (p < kBceClamp || p > 1.0 - kBceClamp) continue;
      gi[i] += self.grad[0] * (p - y[i]) / (p * (1.0 - p)) / n;
    }
  });
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw DataError("backward: loss must be a scalar, got " +
                    (loss.defined() ? shape_to_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf() || n->grad.size() != n->value.size()) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->grad[0] += 1.0;

  const std::string& fault = fault_op();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    if (!fault.empty() && n->op == fault) {
      for (double& g : n->grad) g *= 1.5;
    }
    n->backward(*n);
  }
}

// ---- parameters ------------------------------------------------------------

Tensor& ParameterStore::add(std::string name, Tensor tensor) {
  if (contains(name)) throw UsageError("duplicate parameter name " + name);
  entries_.emplace_back(std::move(name), std::move(tensor));
  return entries_.back().second;
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& ParameterStore::get(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw UsageError("no parameter named " + std::string(name));
}

Tensor& ParameterStore::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParameterStore&>(*this).get(name));
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the combined state.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::mt19937_64 rng_for(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return std::mt19937_64(mix_seed(seed, h));
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

namespace testing {

void inject_backward_fault(std::string op) { fault_op() = std::move(op); }
const std::string& injected_backward_fault() { return fault_op(); }

}  // namespace testing

}  // namespace fusionnet::autodiff
