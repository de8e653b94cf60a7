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

// Layer-level ops with hand-written backward passes. All image tensors are
// NCHW: [batch x channels x height x width].

#include <cstddef>

#include "core/rng.hpp"
#include "core/tape.hpp"

namespace tandem {

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x:[B x Cin x H x W], weight:[Cout x Cin x kh x kw] -> [B x Cout x Ho x Wo].
/// No bias term. Batch items run through parallel_for.
Var conv2d(const Var& x, const Var& weight, Conv2dGeometry geometry);

/// Non-overlapping average pooling (stride == kernel).
Var avg_pool2d(const Var& x, std::size_t kernel);

/// Running statistics updated by batch_norm2d in training mode.
struct BatchNormStats {
  Tensor mean;
  Tensor var;
};

/// Per-channel batch normalisation. Training mode normalises with batch
/// statistics and updates `stats`; eval mode uses `stats` and leaves it alone.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training,
                 Real momentum = 0.1, Real eps = 1e-5);

/// Inverted dropout: kept activations are divided by (1 - p). Identity when
/// p == 0 or not training. Requires 0 <= p < 1.
Var dropout(const Var& x, Real p, bool training, Rng& rng);

/// Fused LSTM pointwise stage. preact:[4D] holds input, forget, output and
/// candidate pre-activations in that order; m_prev:[D]. Returns [2D] holding
/// the new hidden state followed by the new memory state.
Var lstm_gates(const Var& preact, const Var& m_prev);

}  // namespace tandem
