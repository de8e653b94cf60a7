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
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/key_values.hpp"
#include "core/model.hpp"
#include "core/optimizer.hpp"

namespace tandem {

/// Report-generation fine-tune of a trained classifier. The image encoder
/// stays frozen throughout; attention and head are frozen for the first
/// `freeze_attention_epochs` epochs and then trained at `finetune_lr`. The
/// shared text LSTM and the caption adapter train at `language_lr` while the
/// attention is frozen, then drop to `finetune_lr` as well.
struct CaptionConfig {
  std::size_t freeze_attention_epochs = 5;
  Real finetune_lr = 5e-5;
  Real language_lr = 1e-2;
  std::size_t max_decode_length = 80;
  Real clip_norm = 0.1;
  /// Adds the classification loss so attention keeps a training signal.
  bool classification_loss = true;

  void validate() const;
  void write(KeyValues& kv) const;
  static CaptionConfig read(KeyValueReader& kv);
};

struct CaptionStep {
  Real caption_loss = 0;  // mean per-token cross-entropy
  Real class_loss = 0;
  bool truncated = false;
};

/// Teacher-forced per-token cross-entropy of `report` given image features.
/// The projected pooled features are the first LSTM input; then BOS and each
/// reference token in turn predict the next token. Reports longer than
/// max_tokens are cut (and *truncated set).
Var caption_loss(Tape& tape, TandemModel& model, const Var& v_raw, const TokenizedReport& report,
                 std::size_t max_tokens, bool* truncated = nullptr);

class CaptionTrainer {
 public:
  CaptionTrainer(TandemModel& model, const CaptionConfig& config);

  CaptionStep train_step(const Sample& sample, std::size_t epoch, Rng& rng, std::size_t report_variant = 0);

  struct EpochStats {
    std::size_t epoch = 0;
    Real caption_loss = 0;
    Real class_loss = 0;
    std::size_t truncated = 0;
  };
  /// One shuffled pass; each visit uses a uniformly drawn report variant.
  EpochStats train_epoch(const Corpus& corpus, std::span<const std::size_t> indices, std::size_t epoch, Rng& rng);

  const CaptionConfig& config() const { return config_; }

 private:
  TandemModel& model_;
  CaptionConfig config_;
  Adam language_;
  Adam attention_;
};

/// Greedy decode seeded by the image; stops at EOS (not included) or after
/// max_tokens tokens.
std::vector<TokenId> generate_report(TandemModel& model, const Sample& sample, std::size_t max_tokens);

/// Fraction of the N feature slots whose decoded severity equals the truth,
/// over `indices`.
Real caption_slot_accuracy(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                           std::size_t max_tokens);

}  // namespace tandem
