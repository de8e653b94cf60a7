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
#include "core/captioner.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"
#include "core/parallel.hpp"

namespace tandem {
namespace {

/// Sets frozen flags for the duration of one step and clears them afterwards,
/// so later classification training sees a plain model.
class FreezeScope {
 public:
  FreezeScope(const ParameterList& cnn, const ParameterList& attention, bool freeze_attention) {
    for (Parameter* p : cnn) freeze(p);
    if (freeze_attention) {
      for (Parameter* p : attention) freeze(p);
    }
  }
  ~FreezeScope() {
    for (Parameter* p : frozen_) p->frozen = false;
  }
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  void freeze(Parameter* p) {
    if (!p->frozen) {
      p->frozen = true;
      frozen_.push_back(p);
    }
  }
  std::vector<Parameter*> frozen_;
};

LstmState image_seeded_state(const TextEncoder::Bound& text, const CaptionHead::Bound& cap, const Var& v_raw) {
  Tape& tape = v_raw.tape();
  LstmState state = TextEncoder::initial_state(tape, text.hidden_dim);
  const Var x0 = add(matmul(cap.image_weight, global_avg_pool(v_raw)), cap.image_bias);
  return lstm_step(x0, state, text.lstm);
}

}  // namespace

void CaptionConfig::validate() const {
  if (!(finetune_lr > 0)) throw ConfigError("caption.finetune_lr must be positive");
  if (!(language_lr > 0)) throw ConfigError("caption.language_lr must be positive");
  if (!(clip_norm > 0)) throw ConfigError("caption.clip_norm must be positive");
  if (max_decode_length < 2) throw ConfigError("caption.max_decode_length must be at least 2");
}

void CaptionConfig::write(KeyValues& kv) const {
  kv["caption.freeze_attention_epochs"] = std::to_string(freeze_attention_epochs);
  kv["caption.finetune_lr"] = format_real(finetune_lr);
  kv["caption.language_lr"] = format_real(language_lr);
  kv["caption.max_decode_length"] = std::to_string(max_decode_length);
  kv["caption.clip_norm"] = format_real(clip_norm);
  kv["caption.classification_loss"] = classification_loss ? "true" : "false";
}

CaptionConfig CaptionConfig::read(KeyValueReader& kv) {
  CaptionConfig c;
  c.freeze_attention_epochs = kv.get_size("caption.freeze_attention_epochs", c.freeze_attention_epochs);
  c.finetune_lr = kv.get_real("caption.finetune_lr", c.finetune_lr);
  c.language_lr = kv.get_real("caption.language_lr", c.language_lr);
  c.max_decode_length = kv.get_size("caption.max_decode_length", c.max_decode_length);
  c.clip_norm = kv.get_real("caption.clip_norm", c.clip_norm);
  c.classification_loss = kv.get_bool("caption.classification_loss", c.classification_loss);
  return c;
}

Var caption_loss(Tape& tape, TandemModel& model, const Var& v_raw, const TokenizedReport& report,
                 std::size_t max_tokens, bool* truncated) {
  if (report.tokens.size() < 2) throw InputError("caption_loss: reference report needs at least two tokens");
  const std::size_t len = std::min(report.tokens.size(), max_tokens);
  if (truncated) *truncated = len < report.tokens.size();
  const auto text = model.text().bind(tape);
  const auto cap = model.caption().bind(tape);
  LstmState state = image_seeded_state(text, cap, v_raw);
  std::vector<Var> losses;
  losses.reserve(len - 1);
  for (std::size_t i = 0; i + 1 < len; ++i) {
    state = lstm_step(TextEncoder::embed(text, report.tokens[i]), state, text.lstm);
    const Var logits = add(matmul(cap.word_weight, state.h), cap.word_bias);
    losses.push_back(cross_entropy(logits, report.tokens[i + 1]));
  }
  return mean(losses);
}

CaptionTrainer::CaptionTrainer(TandemModel& model, const CaptionConfig& config)
    : model_(model),
      config_(config),
      language_(model.language_group(), config.language_lr),
      attention_(model.attention_group(), config.finetune_lr) {
  config_.validate();
}

CaptionStep CaptionTrainer::train_step(const Sample& sample, std::size_t epoch, Rng& rng, std::size_t report_variant) {
  if (report_variant >= sample.reports.size()) throw InputError("caption: sample has no report variant " + std::to_string(report_variant));
  const bool attention_frozen = epoch < config_.freeze_attention_epochs;
  const ParameterList attention = model_.attention_group();
  FreezeScope scope(model_.cnn_group(), attention, attention_frozen);
  language_.set_lr(attention_frozen ? config_.language_lr : config_.finetune_lr);

  ParameterList all = model_.parameters();
  for (Parameter* p : all) p->zero_grad();

  Tape tape;
  ForwardOptions opts;
  opts.policy = {model_.config().drop_rate, Mode::kTrain, true};
  opts.encoder_eval = true;
  const Sample* one[] = {&sample};
  auto res = forward_batch(tape, model_, one, opts, rng);

  CaptionStep step;
  Var loss = caption_loss(tape, model_, res.samples[0].v_raw, sample.reports[report_variant],
                          config_.max_decode_length, &step.truncated);
  step.caption_loss = loss.value()[0];
  step.class_loss = res.loss.value()[0];
  if (config_.classification_loss && model_.config().kind == ModelKind::kTandem) loss = add(loss, res.loss);
  if (!std::isfinite(loss.value()[0])) throw DivergenceError("caption training diverged: non-finite loss");
  tape.backward(loss);

  ParameterList trainable = model_.language_group();
  if (!attention_frozen) trainable.insert(trainable.end(), attention.begin(), attention.end());
  clip_grad_norm(trainable, config_.clip_norm);
  language_.step();
  if (!attention_frozen) attention_.step();
  return step;
}

CaptionTrainer::EpochStats CaptionTrainer::train_epoch(const Corpus& corpus, std::span<const std::size_t> indices,
                                                       std::size_t epoch, Rng& rng) {
  if (indices.empty()) throw InputError("caption: empty training set");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  EpochStats st;
  st.epoch = epoch;
  for (std::size_t idx : order) {
    const Sample& s = corpus.samples.at(idx);
    const auto variant = static_cast<std::size_t>(uniform_index(rng, s.reports.size()));
    const CaptionStep step = train_step(s, epoch, rng, variant);
    st.caption_loss += step.caption_loss;
    st.class_loss += step.class_loss;
    st.truncated += step.truncated;
  }
  st.caption_loss /= static_cast<Real>(order.size());
  st.class_loss /= static_cast<Real>(order.size());
  return st;
}

std::vector<TokenId> generate_report(TandemModel& model, const Sample& sample, std::size_t max_tokens) {
  Tape tape;
  Rng unused(0);
  const Tensor img = image_tensor(model, sample);
  Tensor batch({1, img.dim(0), img.dim(1), img.dim(2)}, std::vector<Real>(img.data().begin(), img.data().end()));
  const Var maps = model.encoder().forward(tape.constant(std::move(batch)), false, unused);
  const Var v_raw = model.encoder().visual_features(maps, 0);
  const auto text = model.text().bind(tape);
  const auto cap = model.caption().bind(tape);
  LstmState state = image_seeded_state(text, cap, v_raw);
  std::vector<TokenId> out;
  TokenId prev = Vocabulary::kBos;
  while (out.size() < max_tokens) {
    state = lstm_step(TextEncoder::embed(text, prev), state, text.lstm);
    const Tensor logits = add(matmul(cap.word_weight, state.h), cap.word_bias).value();
    const auto v = logits.data();
    const auto next = static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
    if (next == Vocabulary::kEos) break;
    out.push_back(next);
    prev = next;
  }
  return out;
}

Real caption_slot_accuracy(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                           std::size_t max_tokens) {
  if (indices.empty()) throw InputError("caption_slot_accuracy: empty sample set");
  const TemplateBank bank = default_templates();
  std::vector<std::size_t> hits(indices.size(), 0);
  parallel_for(indices.size(), [&](std::size_t i, std::size_t) {
    const Sample& s = corpus.samples.at(indices[i]);
    const auto sentences = decode_sentences(model.vocab(), generate_report(model, s, max_tokens));
    const auto slots = extract_severity_slots(sentences, bank);
    for (std::size_t f = 0; f < kFeatureTypes; ++f) hits[i] += slots[f] == static_cast<int>(s.severity[f]);
  });
  std::size_t total = 0;
  for (std::size_t h : hits) total += h;
  return static_cast<Real>(total) / static_cast<Real>(indices.size() * kFeatureTypes);
}

}  // namespace tandem
