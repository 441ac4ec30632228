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

#ifndef FUSIONNET_GRADCHECK_HPP_
#define FUSIONNET_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "fusionnet/autodiff.hpp"

namespace fusionnet::gradcheck {

struct GroupResult {
  std::string group;  // "op:<name>" for primitives, "model:<parameter>" for the toy model
  std::string alias;  // W, W_i, W_j for the fusion weights, empty otherwise
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = true;
};

struct Report {
  double tolerance = 1e-4;
  std::vector<GroupResult> groups;

  bool passed() const;
  std::vector<std::string> failing() const;
};

// Central differences on every entry of `wrt`; the relative error of an entry
// is |analytic - numeric| / max(1, |analytic|). `loss` rebuilds the graph from
// the current values of `wrt` and must return a single-element tensor.
GroupResult check(const std::string& group, const std::function<autodiff::Tensor()>& loss,
                  std::vector<autodiff::Tensor> wrt, double tolerance, double step = 1e-6);

// Every primitive op, then every parameter of a toy two-channel Hybrid model.
Report run(std::uint64_t seed = 1, double tolerance = 1e-4);

void write_report(std::ostream& out, const Report& report);

}  // namespace fusionnet::gradcheck

#endif  // FUSIONNET_GRADCHECK_HPP_
