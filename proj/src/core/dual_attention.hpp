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

#include <cstddef>
#include <utility>

#include "core/init.hpp"
#include "core/tape.hpp"

namespace tandem {

/// Joint attention over G image regions and N sentences.
///
///   z_sv  = tanh(W_v V + (W_s' mean_cols(S)) 1_G^T)        [M x G]
///   z_vs  = tanh(W_s S + (W_v' mean_cols(V)) 1_N^T)        [M x N]
///   e     = w^T [z_sv, z_vs] + b                           [G + N]
///   alpha = softmax(e)
///   c     = [V, S] alpha                                   [C]
///
/// A single softmax spans both modalities, so image and sentence pieces
/// compete for the same mass and each side is conditioned on the other's
/// pooled summary.
struct AttentionResult {
  Var alpha;    // [G + N]
  Var context;  // [C]
  Var z_sv;     // [M x G]
  Var z_vs;     // [M x N]
};

class DualAttention {
 public:
  /// The context vector mixes columns of V and S, and the prediction head adds
  /// it to pooled V, so C == D == M is required (ConfigError otherwise).
  DualAttention(std::size_t channels, std::size_t hidden_dim, std::size_t attention_dim, Rng& rng);

  struct Bound {
    Var embed_v_weight;  // [C x C], 1x1 conv over the region grid
    Var embed_v_bias;    // [C]
    Var embed_s_weight;  // [D x D], no bias: zeroed text stays exactly zero
    Var w_v, w_v_global;  // [M x C]: W_v, W_v'
    Var w_s, w_s_global;  // [M x D]: W_s, W_s'
    Var w;               // [1 x M]
    Var b;               // [1]
  };
  Bound bind(Tape& tape);

  /// V = tanh(conv1x1(V_raw)), S = tanh(W S_raw).
  static std::pair<Var, Var> embed_inputs(const Bound& p, const Var& v_raw, const Var& s_raw);

  static AttentionResult attend(const Bound& p, const Var& v, const Var& s);

  /// attend() with S replaced by an all-zero [D x sentences] matrix.
  static AttentionResult attend_image_only(const Bound& p, const Var& v, std::size_t sentences);

  std::size_t channels() const { return channels_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t attention_dim() const { return attention_dim_; }

  Parameter& embed_v_weight() { return embed_v_weight_; }
  Parameter& embed_v_bias() { return embed_v_bias_; }
  Parameter& embed_s_weight() { return embed_s_weight_; }
  Parameter& w_v() { return w_v_; }
  Parameter& w_v_global() { return w_v_global_; }
  Parameter& w_s() { return w_s_; }
  Parameter& w_s_global() { return w_s_global_; }
  Parameter& w() { return w_; }
  Parameter& b() { return b_; }

  void collect(ParameterList& out);

 private:
  std::size_t channels_, hidden_dim_, attention_dim_;
  Parameter embed_v_weight_, embed_v_bias_, embed_s_weight_;
  Parameter w_v_, w_v_global_, w_s_, w_s_global_, w_, b_;
};

}  // namespace tandem
