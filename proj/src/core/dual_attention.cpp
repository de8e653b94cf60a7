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
#include "core/dual_attention.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace tandem {

DualAttention::DualAttention(std::size_t channels, std::size_t hidden_dim, std::size_t attention_dim, Rng& rng)
    : channels_(channels), hidden_dim_(hidden_dim), attention_dim_(attention_dim) {
  if (attention_dim != channels) {
    throw ConfigError("attention: M (" + std::to_string(attention_dim) + ") must equal C (" + std::to_string(channels) +
                      ") for the visual skip-connection");
  }
  if (hidden_dim != channels) {
    throw ConfigError("attention: D (" + std::to_string(hidden_dim) + ") must equal C (" + std::to_string(channels) +
                      ") so that [V, S] alpha is defined");
  }
  const Real bound = 1 / std::sqrt(static_cast<Real>(attention_dim));
  const Real embed_bound = 1 / std::sqrt(static_cast<Real>(channels));
  embed_v_weight_ = Parameter("attention/embed_v/weight", uniform_init({channels, channels}, embed_bound, rng));
  embed_v_bias_ = Parameter("attention/embed_v/bias", Tensor({channels}, 0.0));
  embed_s_weight_ = Parameter("attention/embed_s/weight", uniform_init({hidden_dim, hidden_dim}, embed_bound, rng));
  w_v_ = Parameter("attention/w_v", uniform_init({attention_dim, channels}, bound, rng));
  w_v_global_ = Parameter("attention/w_v_global", uniform_init({attention_dim, channels}, bound, rng));
  w_s_ = Parameter("attention/w_s", uniform_init({attention_dim, hidden_dim}, bound, rng));
  w_s_global_ = Parameter("attention/w_s_global", uniform_init({attention_dim, hidden_dim}, bound, rng));
  w_ = Parameter("attention/w", uniform_init({1, attention_dim}, bound, rng));
  b_ = Parameter("attention/b", Tensor({1}, 0.0));
}

DualAttention::Bound DualAttention::bind(Tape& t) {
  return {t.param(embed_v_weight_), t.param(embed_v_bias_), t.param(embed_s_weight_), t.param(w_v_),
          t.param(w_v_global_),     t.param(w_s_),          t.param(w_s_global_),     t.param(w_),
          t.param(b_)};
}

std::pair<Var, Var> DualAttention::embed_inputs(const Bound& p, const Var& v_raw, const Var& s_raw) {
  const std::size_t c = p.embed_v_weight.shape()[1];
  const std::size_t d = p.embed_s_weight.shape()[1];
  if (v_raw.value().rank() != 2 || v_raw.shape()[0] != c) {
    throw DimensionError("embed_inputs: V must be [" + std::to_string(c) + " x G], got " + to_string(v_raw.shape()));
  }
  if (s_raw.value().rank() != 2 || s_raw.shape()[0] != d) {
    throw DimensionError("embed_inputs: S must be [" + std::to_string(d) + " x N], got " + to_string(s_raw.shape()));
  }
  Var v = tandem::tanh(add(matmul(p.embed_v_weight, v_raw), p.embed_v_bias));
  Var s = tandem::tanh(matmul(p.embed_s_weight, s_raw));
  return {v, s};
}

AttentionResult DualAttention::attend(const Bound& p, const Var& v, const Var& s) {
  if (v.value().rank() != 2 || s.value().rank() != 2) {
    throw DimensionError("attend: V and S must be matrices, got " + to_string(v.shape()) + " and " +
                         to_string(s.shape()));
  }
  if (v.shape()[0] != p.w_v.shape()[1] || s.shape()[0] != p.w_s.shape()[1] || v.shape()[0] != s.shape()[0]) {
    throw DimensionError("attend: V " + to_string(v.shape()) + " and S " + to_string(s.shape()) +
                         " do not match the attention parameters");
  }
  const std::size_t g = v.shape()[1];
  const std::size_t n = s.shape()[1];

  Var z_sv = tandem::tanh(add(matmul(p.w_v, v), matmul(p.w_s_global, global_avg_pool(s))));
  check_finite(z_sv, "z_sv");
  Var z_vs = tandem::tanh(add(matmul(p.w_s, s), matmul(p.w_v_global, global_avg_pool(v))));
  check_finite(z_vs, "z_vs");

  Var scores = add(reshape(matmul(p.w, concat_cols(z_sv, z_vs)), {g + n}), p.b);
  check_finite(scores, "scores");
  Var alpha = softmax(scores);
  Var context = matmul(concat_cols(v, s), alpha);
  check_finite(context, "context");
  return {alpha, context, z_sv, z_vs};
}

AttentionResult DualAttention::attend_image_only(const Bound& p, const Var& v, std::size_t sentences) {
  const std::size_t d = p.w_s.shape()[1];
  return attend(p, v, v.tape().constant(Tensor({d, sentences}, 0.0)));
}

void DualAttention::collect(ParameterList& out) {
  out.insert(out.end(), {&embed_v_weight_, &embed_v_bias_, &embed_s_weight_, &w_v_, &w_v_global_, &w_s_,
                         &w_s_global_, &w_, &b_});
}

}  // namespace tandem
