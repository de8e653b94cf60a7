/* Copyright 2026 The Tandem Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */
#pragma once

#include <functional>
#include <span>
#include <vector>

#include "core/tape.hpp"

namespace tandem {

struct GradCheckOptions {
  Real eps = 1e-5;
  /// Denominator floor in |analytic - numeric| / max(|analytic|, |numeric|, floor).
  Real floor = 1e-4;
};

struct GradCheckReport {
  Real max_relative_error = 0;
  std::size_t coordinates = 0;
  /// Largest |analytic| seen; zero means the function looked constant.
  Real max_abs_gradient = 0;
};

/// f maps leaves (one per input tensor, same order) to a one-element Var.
using LeafFunction = std::function<Var(Tape&, std::span<const Var> leaves)>;

/// Compares reverse-mode gradients w.r.t. `inputs` with central differences.
/// f must be deterministic; reseed any RNG inside f.
GradCheckReport grad_check(const LeafFunction& f, std::vector<Tensor> inputs, GradCheckOptions options = {});

/// Same check over model parameters; f records the params itself. Parameter
/// values are restored on exit; grads are left zeroed.
using ParamFunction = std::function<Var(Tape&)>;
GradCheckReport grad_check_params(const ParamFunction& f, const ParameterList& params, GradCheckOptions options = {});

}  // namespace tandem
