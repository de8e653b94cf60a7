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
#include <span>
#include <vector>

#include "core/init.hpp"
#include "core/tape.hpp"
#include "core/vocabulary.hpp"

namespace tandem {

struct LstmState {
  Var h;  // [D]
  Var m;  // [D]
};

/// Parameters of one LSTM cell as recorded on a tape. Gate rows are ordered
/// input, forget, output, candidate.
struct LstmWeights {
  Var input;   // [4D x K]
  Var hidden;  // [4D x D]
  Var bias;    // [4D]
};

/// One step of the recurrence h_t, m_t = LSTM(x_t, h_{t-1}, m_{t-1}).
LstmState lstm_step(const Var& x, const LstmState& state, const LstmWeights& w);

/// S in R^{D x N}: column j is the hidden state at the j-th sentence end.
struct SemanticFeatures {
  Var s;
};

/// Word embedding (K x |vocab|) feeding a single-layer LSTM of width D.
class TextEncoder {
 public:
  TextEncoder(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim, Rng& rng);

  /// Tape handles for one forward pass; bind once per tape.
  struct Bound {
    Var embedding;
    LstmWeights lstm;
    std::size_t hidden_dim;
  };
  Bound bind(Tape& tape);

  std::size_t vocab_size() const { return embedding_.value.dim(1); }
  std::size_t embed_dim() const { return embedding_.value.dim(0); }
  std::size_t hidden_dim() const { return hidden_dim_; }

  static Var embed(const Bound& b, TokenId token);
  static LstmState initial_state(Tape& tape, std::size_t hidden_dim);

  /// Runs the LSTM over `tokens` from `state`; returns h after every token.
  static std::vector<Var> run(const Bound& b, std::span<const TokenId> tokens, LstmState& state);

  /// Unrolls over the whole report and gathers hidden states at its
  /// sentence-end positions. Throws FormatError if the report does not carry
  /// exactly `expected_sentences` markers.
  static SemanticFeatures encode_report(const Bound& b, const TokenizedReport& report, std::size_t expected_sentences);

  Parameter& embedding() { return embedding_; }
  Parameter& input_weights() { return w_input_; }
  Parameter& hidden_weights() { return w_hidden_; }
  Parameter& bias() { return bias_; }

  void collect(ParameterList& out);

 private:
  std::size_t hidden_dim_;
  Parameter embedding_, w_input_, w_hidden_, bias_;
};

}  // namespace tandem
