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

#include "core/init.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace tandem {

enum class Mode { kTrain, kEval };

/// Stochastic removal of the text modality.
///
/// Train: S is zeroed with probability drop_rate, independently per sample.
/// Eval: S is scaled by (1 - drop_rate) when present, zeroed when absent.
struct ModalityPolicy {
  Real drop_rate = 0.5;
  Mode mode = Mode::kTrain;
  bool text_available = true;

  void validate() const;  // ConfigError unless 0 <= drop_rate < 1
};

/// What the policy does to one sample's S: keep == false means all zeros,
/// otherwise S is multiplied by scale.
struct ModalityDecision {
  bool keep;
  Real scale;
};

/// Draws from rng only in train mode with text available.
ModalityDecision decide_modality(const ModalityPolicy& policy, Rng& rng);

Var apply_modality_policy(const Var& s, const ModalityPolicy& policy, Rng& rng);
Var apply_modality_decision(const Var& s, const ModalityDecision& decision);

struct ClassPrediction {
  Tensor logits;         // [classes]
  Tensor probabilities;  // [classes]
  std::size_t predicted_class = 0;
};

ClassPrediction make_prediction(const Tensor& logits);

/// MLP(c + mean_cols(V_raw)): linear(M->M), tanh, linear(M->classes). The
/// pooled-feature term is a direct path from the loss to the image encoder
/// that does not pass through attention.
class PredictionHead {
 public:
  PredictionHead(std::size_t width, std::size_t classes, Rng& rng);

  struct Bound {
    Var hidden_weight, hidden_bias, out_weight, out_bias;
  };
  Bound bind(Tape& tape);

  /// c: [M] (may be invalid for the image-only baseline, which then uses the
  /// pooled term alone). v_raw: [C x G] with C == M.
  static Var logits(const Bound& p, const Var& c, const Var& v_raw);

  std::size_t width() const { return hidden_weight_.value.dim(0); }
  std::size_t classes() const { return out_weight_.value.dim(0); }

  Parameter& hidden_weight() { return hidden_weight_; }
  Parameter& hidden_bias() { return hidden_bias_; }
  Parameter& out_weight() { return out_weight_; }
  Parameter& out_bias() { return out_bias_; }

  void collect(ParameterList& out);

 private:
  Parameter hidden_weight_, hidden_bias_, out_weight_, out_bias_;
};

}  // namespace tandem
