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
#include "core/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"

namespace tandem {
namespace {

Real scalar_of(const Var& v) {
  if (v.value().size() != 1) throw DimensionError("grad_check: function must return one value, got " + to_string(v.shape()));
  const Real r = v.value()[0];
  if (!std::isfinite(r)) throw NumericError("grad_check: function returned a non-finite value");
  return r;
}

void update(GradCheckReport& report, Real analytic, Real numeric, const GradCheckOptions& o) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), o.floor});
  report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic - numeric) / denom);
  report.max_abs_gradient = std::max(report.max_abs_gradient, std::abs(analytic));
  ++report.coordinates;
}

}  // namespace

GradCheckReport grad_check(const LeafFunction& f, std::vector<Tensor> inputs, GradCheckOptions options) {
  if (!(options.eps > 0)) throw ConfigError("grad_check: eps must be positive");

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(with_grad ? tape.leaf(t) : tape.constant(t));
    Var out = f(tape, leaves);
    const Real r = scalar_of(out);
    if (with_grad) {
      tape.backward(out);
      for (const Var& l : leaves) grads->push_back(l.grad());
    }
    return r;
  };

  std::vector<Tensor> analytic;
  evaluate(true, &analytic);

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const Real saved = inputs[k][i];
      inputs[k][i] = saved + options.eps;
      const Real up = evaluate(false, nullptr);
      inputs[k][i] = saved - options.eps;
      const Real down = evaluate(false, nullptr);
      inputs[k][i] = saved;
      update(report, analytic[k][i], (up - down) / (2 * options.eps), options);
    }
  }
  return report;
}

GradCheckReport grad_check_params(const ParamFunction& f, const ParameterList& params, GradCheckOptions options) {
  if (!(options.eps > 0)) throw ConfigError("grad_check: eps must be positive");
  for (Parameter* p : params) p->zero_grad();
  {
    Tape tape;
    Var out = f(tape);
    scalar_of(out);
    tape.backward(out);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto evaluate = [&] {
    Tape tape;
    return scalar_of(f(tape));
  };

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const Real saved = value[i];
      value[i] = saved + options.eps;
      const Real up = evaluate();
      value[i] = saved - options.eps;
      const Real down = evaluate();
      value[i] = saved;
      update(report, analytic[k][i], (up - down) / (2 * options.eps), options);
    }
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace tandem
