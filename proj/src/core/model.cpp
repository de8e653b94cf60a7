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
#include "core/model.hpp"

#include <cmath>

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace tandem {
namespace {

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.encoder = EncoderConfig::full_scale();
  c.embed_dim = 128;
  c.hidden_dim = 256;
  c.attention_dim = 256;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.encoder = EncoderConfig::toy();
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.attention_dim = 4;
  c.sentences = 2;
  return c;
}

void ModelConfig::validate() const {
  encoder.validate();
  const std::size_t c = encoder.channels();
  if (attention_dim != c) {
    throw ConfigError("model.attention_dim: M=" + std::to_string(attention_dim) + " must equal encoder channels C=" +
                      std::to_string(c));
  }
  if (hidden_dim != c) {
    throw ConfigError("model.hidden_dim: D=" + std::to_string(hidden_dim) + " must equal encoder channels C=" +
                      std::to_string(c));
  }
  if (embed_dim == 0) throw ConfigError("model.embed_dim: K must be positive");
  if (sentences == 0) throw ConfigError("model.sentences: N must be at least 1");
  if (classes < 2) throw ConfigError("model.classes: need at least 2 classes");
  if (!(drop_rate >= 0 && drop_rate < 1)) throw ConfigError("model.drop_rate: must lie in [0, 1)");
}

void ModelConfig::write(KeyValues& kv) const {
  kv["encoder.input_size"] = std::to_string(encoder.input_size);
  kv["encoder.stem_width"] = std::to_string(encoder.stem_width);
  kv["encoder.base_width"] = std::to_string(encoder.base_width);
  kv["encoder.widen_factor"] = std::to_string(encoder.widen_factor);
  kv["encoder.num_stages"] = std::to_string(encoder.num_stages);
  kv["encoder.blocks_per_stage"] = std::to_string(encoder.blocks_per_stage);
  kv["encoder.stem_stride"] = std::to_string(encoder.stem_stride);
  kv["encoder.stem_pool"] = std::to_string(encoder.stem_pool);
  kv["encoder.dropout"] = format_real(encoder.dropout);
  kv["model.embed_dim"] = std::to_string(embed_dim);
  kv["model.hidden_dim"] = std::to_string(hidden_dim);
  kv["model.attention_dim"] = std::to_string(attention_dim);
  kv["model.sentences"] = std::to_string(sentences);
  kv["model.classes"] = std::to_string(classes);
  kv["model.drop_rate"] = format_real(drop_rate);
  kv["model.kind"] = kind == ModelKind::kTandem ? "tandem" : "image_only";
}

ModelConfig ModelConfig::read(KeyValueReader& kv) {
  ModelConfig c;
  auto& e = c.encoder;
  e.input_size = kv.get_size("encoder.input_size", e.input_size);
  e.stem_width = kv.get_size("encoder.stem_width", e.stem_width);
  e.base_width = kv.get_size("encoder.base_width", e.base_width);
  e.widen_factor = kv.get_size("encoder.widen_factor", e.widen_factor);
  e.num_stages = kv.get_size("encoder.num_stages", e.num_stages);
  e.blocks_per_stage = kv.get_size("encoder.blocks_per_stage", e.blocks_per_stage);
  e.stem_stride = kv.get_size("encoder.stem_stride", e.stem_stride);
  e.stem_pool = kv.get_size("encoder.stem_pool", e.stem_pool);
  e.dropout = kv.get_real("encoder.dropout", e.dropout);
  c.embed_dim = kv.get_size("model.embed_dim", c.embed_dim);
  c.hidden_dim = kv.get_size("model.hidden_dim", c.hidden_dim);
  c.attention_dim = kv.get_size("model.attention_dim", c.attention_dim);
  c.sentences = kv.get_size("model.sentences", c.sentences);
  c.classes = kv.get_size("model.classes", c.classes);
  c.drop_rate = kv.get_real("model.drop_rate", c.drop_rate);
  const std::string kind = kv.get_string("model.kind", "tandem");
  if (kind == "tandem") {
    c.kind = ModelKind::kTandem;
  } else if (kind == "image_only") {
    c.kind = ModelKind::kImageOnly;
  } else {
    throw ConfigError("model.kind: expected tandem or image_only, got '" + kind + "'");
  }
  return c;
}

CaptionHead::CaptionHead(std::size_t channels, std::size_t embed_dim, std::size_t hidden_dim, std::size_t vocab_size,
                         Rng& rng) {
  image_weight_ = Parameter("caption/image/weight",
                            uniform_init({embed_dim, channels}, 1 / std::sqrt(static_cast<Real>(channels)), rng));
  image_bias_ = Parameter("caption/image/bias", Tensor({embed_dim}, 0.0));
  word_weight_ = Parameter("caption/word/weight",
                           uniform_init({vocab_size, hidden_dim}, 1 / std::sqrt(static_cast<Real>(hidden_dim)), rng));
  word_bias_ = Parameter("caption/word/bias", Tensor({vocab_size}, 0.0));
}

CaptionHead::Bound CaptionHead::bind(Tape& t) {
  return {t.param(image_weight_), t.param(image_bias_), t.param(word_weight_), t.param(word_bias_)};
}

void CaptionHead::collect(ParameterList& out) {
  out.insert(out.end(), {&image_weight_, &image_bias_, &word_weight_, &word_bias_});
}

TandemModel::TandemModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed)
    : config_(validated(config)),
      vocab_(std::move(vocab)),
      init_rng_(derive_rng(seed, 0x1417)),
      encoder_(config_.encoder, init_rng_),
      text_(vocab_.size(), config_.embed_dim, config_.hidden_dim, init_rng_),
      attention_(config_.encoder.channels(), config_.hidden_dim, config_.attention_dim, init_rng_),
      head_(config_.attention_dim, config_.classes, init_rng_),
      caption_(config_.encoder.channels(), config_.embed_dim, config_.hidden_dim, vocab_.size(), init_rng_),
      rgb_mean_({3}, 0.5) {}

ParameterList TandemModel::parameters() {
  ParameterList out;
  encoder_.collect(out);
  text_.collect(out);
  attention_.collect(out);
  head_.collect(out);
  caption_.collect(out);
  return out;
}

ParameterList TandemModel::cnn_group() {
  ParameterList out;
  encoder_.collect(out);
  return out;
}

ParameterList TandemModel::fusion_group() {
  ParameterList out;
  if (config_.kind == ModelKind::kTandem) {
    text_.collect(out);
    attention_.collect(out);
  }
  head_.collect(out);
  return out;
}

ParameterList TandemModel::attention_group() {
  ParameterList out;
  attention_.collect(out);
  head_.collect(out);
  return out;
}

ParameterList TandemModel::language_group() {
  ParameterList out;
  text_.collect(out);
  caption_.collect(out);
  return out;
}

BufferList TandemModel::buffers() {
  BufferList out;
  encoder_.collect_buffers(out);
  out.push_back({"data/rgb_mean", &rgb_mean_});
  return out;
}

Tensor image_tensor(const TandemModel& model, const Sample& sample) {
  const std::size_t size = model.config().encoder.input_size;
  if (sample.image.size() != 3 * size * size) {
    throw DimensionError("image has " + std::to_string(sample.image.size()) + " bytes, model expects 3x" +
                         std::to_string(size) + "x" + std::to_string(size));
  }
  Tensor t({3, size, size});
  const auto& mean = model.rgb_mean();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < size * size; ++i) {
      t[c * size * size + i] = sample.image[c * size * size + i] / 255.0 - mean[c];
    }
  }
  return t;
}

Tensor rgb_mean_of(const Corpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("rgb mean of an empty split");
  const std::size_t plane = corpus.image_size() * corpus.image_size();
  Tensor mean({3}, 0.0);
  for (std::size_t idx : indices) {
    const auto& img = corpus.samples.at(idx).image;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += img[c * plane + i];
      mean[c] += s / (255.0 * static_cast<double>(plane));
    }
  }
  for (std::size_t c = 0; c < 3; ++c) mean[c] /= static_cast<double>(indices.size());
  return mean;
}

BatchResult forward_batch(Tape& tape, TandemModel& model, std::span<const Sample* const> batch,
                          const ForwardOptions& options, Rng& rng) {
  if (batch.empty()) throw InputError("forward_batch: empty batch");
  const auto& cfg = model.config();
  const bool training = options.policy.mode == Mode::kTrain;
  const std::size_t size = cfg.encoder.input_size;
  const std::size_t plane = 3 * size * size;

  Tensor images({batch.size(), 3, size, size});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Tensor one = image_tensor(model, *batch[b]);
    std::copy(one.data().begin(), one.data().end(), images.data().begin() + static_cast<long>(b * plane));
  }
  Var maps = model.encoder().forward(tape.constant(std::move(images)), training && !options.encoder_eval, rng);

  const bool tandem = cfg.kind == ModelKind::kTandem;
  auto head = model.head().bind(tape);
  TextEncoder::Bound text{};
  DualAttention::Bound att{};
  if (tandem) {
    text = model.text().bind(tape);
    att = model.attention().bind(tape);
  }

  BatchResult result;
  std::vector<Var> losses;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Sample& sample = *batch[b];
    SampleResult r;
    r.v_raw = model.encoder().visual_features(maps, b);
    if (tandem) {
      const ModalityDecision decision = decide_modality(options.policy, rng);
      Var s_raw;
      if (decision.keep) {
        if (sample.reports.empty()) throw InputError("sample has no report but text is marked available");
        const std::size_t variant =
            training && options.random_report ? uniform_index(rng, sample.reports.size()) : 0;
        s_raw = TextEncoder::encode_report(text, sample.reports[variant], cfg.sentences).s;
        s_raw = apply_modality_decision(s_raw, decision);
      } else {
        s_raw = tape.constant(Tensor({cfg.hidden_dim, cfg.sentences}, 0.0));
      }
      r.text_dropped = !decision.keep;
      auto [v, s] = DualAttention::embed_inputs(att, r.v_raw, s_raw);
      r.attention = DualAttention::attend(att, v, s);
      const Var c = options.detach_context ? detach(r.attention.context) : r.attention.context;
      r.logits = PredictionHead::logits(head, c, r.v_raw);
    } else {
      r.logits = PredictionHead::logits(head, Var(), r.v_raw);
    }
    losses.push_back(cross_entropy(r.logits, sample.label));
    result.samples.push_back(std::move(r));
  }
  result.loss = mean(losses);
  return result;
}

}  // namespace tandem
