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
#include <cstdint>
#include <span>
#include <vector>

#include "core/corpus.hpp"
#include "core/dual_attention.hpp"
#include "core/image_encoder.hpp"
#include "core/key_values.hpp"
#include "core/prediction_head.hpp"
#include "core/text_encoder.hpp"

namespace tandem {

enum class ModelKind { kTandem, kImageOnly };

struct ModelConfig {
  EncoderConfig encoder = EncoderConfig::desk();
  std::size_t embed_dim = 32;      // K
  std::size_t hidden_dim = 64;     // D
  std::size_t attention_dim = 64;  // M
  std::size_t sentences = 5;       // N
  std::size_t classes = 4;
  Real drop_rate = 0.5;
  ModelKind kind = ModelKind::kTandem;

  /// K=128, D=M=256 on the full-scale encoder.
  static ModelConfig full_scale();
  /// Encoder C=4, g=2 with K=3, D=M=4, N=2.
  static ModelConfig toy();

  /// ConfigError naming the field for M != C, D != C, N == 0, bad drop rate.
  void validate() const;

  /// Keys are prefixed with "model." and "encoder.".
  void write(KeyValues& kv) const;
  static ModelConfig read(KeyValueReader& kv);
};

/// Adapter and output layer used when the text LSTM is trained to decode
/// reports: pooled V is projected to a K-vector fed as the first LSTM input,
/// and every hidden state is mapped to word logits.
class CaptionHead {
 public:
  CaptionHead(std::size_t channels, std::size_t embed_dim, std::size_t hidden_dim, std::size_t vocab_size, Rng& rng);

  struct Bound {
    Var image_weight, image_bias, word_weight, word_bias;
  };
  Bound bind(Tape& tape);

  Parameter& image_weight() { return image_weight_; }
  Parameter& word_weight() { return word_weight_; }
  void collect(ParameterList& out);

 private:
  Parameter image_weight_, image_bias_, word_weight_, word_bias_;
};

class TandemModel {
 public:
  TandemModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }

  ImageEncoder& encoder() { return encoder_; }
  TextEncoder& text() { return text_; }
  DualAttention& attention() { return attention_; }
  PredictionHead& head() { return head_; }
  CaptionHead& caption() { return caption_; }

  /// Per-channel mean subtracted from [0, 1] pixels; set from the training split.
  Tensor& rgb_mean() { return rgb_mean_; }
  const Tensor& rgb_mean() const { return rgb_mean_; }

  /// Every parameter, in a fixed order.
  ParameterList parameters();
  ParameterList cnn_group();
  /// Text encoder, dual attention and prediction head.
  ParameterList fusion_group();
  /// Dual attention and prediction head only.
  ParameterList attention_group();
  /// Text encoder and caption head.
  ParameterList language_group();
  /// Batch-norm running statistics and the RGB mean.
  BufferList buffers();

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  Rng init_rng_;
  ImageEncoder encoder_;
  TextEncoder text_;
  DualAttention attention_;
  PredictionHead head_;
  CaptionHead caption_;
  Tensor rgb_mean_;
};

/// [3 x S x S] pixels scaled to [0, 1] minus the model's RGB mean.
Tensor image_tensor(const TandemModel& model, const Sample& sample);
Tensor rgb_mean_of(const Corpus& corpus, std::span<const std::size_t> indices);

struct SampleResult {
  Var logits;
  AttentionResult attention;  // fields invalid for the image-only baseline
  Var v_raw;                  // [C x G]
  bool text_dropped = false;
};

struct BatchResult {
  std::vector<SampleResult> samples;
  Var loss;  // mean cross-entropy over the batch
};

struct ForwardOptions {
  ModalityPolicy policy;
  /// Train mode picks a report variant uniformly; eval uses variant 0.
  bool random_report = true;
  /// Stop gradients flowing from the context vector into the rest of the
  /// model, leaving only the pooled-feature path.
  bool detach_context = false;
  /// Run the image encoder in eval mode (no dropout, running BN statistics)
  /// whatever the policy mode.
  bool encoder_eval = false;
};

BatchResult forward_batch(Tape& tape, TandemModel& model, std::span<const Sample* const> batch,
                          const ForwardOptions& options, Rng& rng);

}  // namespace tandem
