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
#include "core/text_encoder.hpp"

#include "core/errors.hpp"
#include "core/nn_ops.hpp"
#include "core/ops.hpp"

namespace tandem {
namespace {

constexpr Real kInitBound = 0.08;

}  // namespace

LstmState lstm_step(const Var& x, const LstmState& state, const LstmWeights& w) {
  const std::size_t d = state.h.value().size();
  if (w.hidden.shape() != Shape{4 * d, d} || w.input.value().rank() != 2 || w.input.shape()[0] != 4 * d ||
      w.input.shape()[1] != x.value().size()) {
    throw DimensionError("lstm_step: weights " + to_string(w.input.shape()) + "/" + to_string(w.hidden.shape()) +
                         " do not fit input " + to_string(x.shape()) + " and state width " + std::to_string(d));
  }
  if (!x.value().all_finite()) throw NumericError("lstm_step: non-finite input");
  Var pre = add(add(matmul(w.input, x), matmul(w.hidden, state.h)), w.bias);
  Var out = lstm_gates(pre, state.m);
  return {slice(out, 0, d), slice(out, d, 2 * d)};
}

TextEncoder::TextEncoder(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim, Rng& rng)
    : hidden_dim_(hidden_dim) {
  if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0) throw ConfigError("text encoder: dimensions must be positive");
  embedding_ = Parameter("text/embedding", uniform_init({embed_dim, vocab_size}, kInitBound, rng));
  w_input_ = Parameter("text/lstm/input_weights", uniform_init({4 * hidden_dim, embed_dim}, kInitBound, rng));
  w_hidden_ = Parameter("text/lstm/hidden_weights", uniform_init({4 * hidden_dim, hidden_dim}, kInitBound, rng));
  Tensor b({4 * hidden_dim}, 0.0);
  for (std::size_t k = hidden_dim; k < 2 * hidden_dim; ++k) b[k] = 1.0;  // forget gate
  bias_ = Parameter("text/lstm/bias", std::move(b));
}

TextEncoder::Bound TextEncoder::bind(Tape& tape) {
  return {tape.param(embedding_), {tape.param(w_input_), tape.param(w_hidden_), tape.param(bias_)}, hidden_dim_};
}

Var TextEncoder::embed(const Bound& b, TokenId token) { return column(b.embedding, token); }

LstmState TextEncoder::initial_state(Tape& tape, std::size_t hidden_dim) {
  return {tape.constant(Tensor({hidden_dim}, 0.0)), tape.constant(Tensor({hidden_dim}, 0.0))};
}

std::vector<Var> TextEncoder::run(const Bound& b, std::span<const TokenId> tokens, LstmState& state) {
  std::vector<Var> hidden;
  hidden.reserve(tokens.size());
  for (TokenId tok : tokens) {
    state = lstm_step(embed(b, tok), state, b.lstm);
    hidden.push_back(state.h);
  }
  return hidden;
}

SemanticFeatures TextEncoder::encode_report(const Bound& b, const TokenizedReport& report,
                                            std::size_t expected_sentences) {
  if (report.sentence_ends.size() != expected_sentences) {
    throw FormatError("report has " + std::to_string(report.sentence_ends.size()) +
                      " sentence-end markers, expected N=" + std::to_string(expected_sentences));
  }
  LstmState state = initial_state(b.embedding.tape(), b.hidden_dim);
  std::vector<Var> hidden = run(b, report.tokens, state);
  std::vector<Var> columns;
  for (std::size_t pos : report.sentence_ends) {
    if (pos >= hidden.size()) throw FormatError("sentence-end position beyond report length");
    columns.push_back(hidden[pos]);
  }
  return {stack_cols(columns)};
}

void TextEncoder::collect(ParameterList& out) { out.insert(out.end(), {&embedding_, &w_input_, &w_hidden_, &bias_}); }

}  // namespace tandem
