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
#include "core/prediction_head.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace tandem {

void ModalityPolicy::validate() const {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) {
    throw ConfigError("modality drop rate must be in [0, 1), got " + std::to_string(drop_rate));
  }
}

ModalityDecision decide_modality(const ModalityPolicy& policy, Rng& rng) {
  policy.validate();
  if (!policy.text_available) return {false, 0.0};
  if (policy.mode == Mode::kEval) return {true, 1.0 - policy.drop_rate};
  if (policy.drop_rate > 0.0 && bernoulli(rng, policy.drop_rate)) return {false, 0.0};
  return {true, 1.0};
}

Var apply_modality_decision(const Var& s, const ModalityDecision& decision) {
  if (!decision.keep) return s.tape().constant(Tensor(s.shape(), 0.0));
  if (decision.scale == 1.0) return s;
  return scale(s, decision.scale);
}

Var apply_modality_policy(const Var& s, const ModalityPolicy& policy, Rng& rng) {
  return apply_modality_decision(s, decide_modality(policy, rng));
}

ClassPrediction make_prediction(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() == 0) throw DimensionError("prediction: logits must be a non-empty vector");
  if (!logits.all_finite()) throw NumericError("prediction: non-finite logits");
  ClassPrediction p;
  p.logits = logits;
  p.probabilities = Tensor(logits.shape(), 0.0);
  const auto v = logits.data();
  const Real mx = *std::max_element(v.begin(), v.end());
  Real total = 0;
  for (std::size_t i = 0; i < v.size(); ++i) total += (p.probabilities[i] = std::exp(v[i] - mx));
  for (std::size_t i = 0; i < v.size(); ++i) p.probabilities[i] /= total;
  p.predicted_class = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  return p;
}

PredictionHead::PredictionHead(std::size_t width, std::size_t classes, Rng& rng) {
  if (width == 0 || classes < 2) throw ConfigError("prediction head: need width > 0 and at least 2 classes");
  const Real bound = 1 / std::sqrt(static_cast<Real>(width));
  hidden_weight_ = Parameter("head/hidden/weight", uniform_init({width, width}, bound, rng));
  hidden_bias_ = Parameter("head/hidden/bias", Tensor({width}, 0.0));
  out_weight_ = Parameter("head/out/weight", uniform_init({classes, width}, bound, rng));
  out_bias_ = Parameter("head/out/bias", Tensor({classes}, 0.0));
}

PredictionHead::Bound PredictionHead::bind(Tape& t) {
  return {t.param(hidden_weight_), t.param(hidden_bias_), t.param(out_weight_), t.param(out_bias_)};
}

Var PredictionHead::logits(const Bound& p, const Var& c, const Var& v_raw) {
  const std::size_t m = p.hidden_weight.shape()[1];
  if (v_raw.value().rank() != 2 || v_raw.shape()[0] != m) {
    throw DimensionError("prediction head: V must be [" + std::to_string(m) + " x G], got " + to_string(v_raw.shape()));
  }
  Var pooled = global_avg_pool(v_raw);
  Var x = pooled;
  if (c.valid()) {
    if (c.shape() != Shape{m}) {
      throw DimensionError("prediction head: context " + to_string(c.shape()) + " does not match width " +
                           std::to_string(m));
    }
    x = add(c, pooled);
  }
  Var h = tandem::tanh(add(matmul(p.hidden_weight, x), p.hidden_bias));
  Var out = add(matmul(p.out_weight, h), p.out_bias);
  check_finite(out, "logits");
  return out;
}

void PredictionHead::collect(ParameterList& out) {
  out.insert(out.end(), {&hidden_weight_, &hidden_bias_, &out_weight_, &out_bias_});
}

}  // namespace tandem
