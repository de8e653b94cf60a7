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
#include "core/image_encoder.hpp"

#include "core/errors.hpp"
#include "core/ops.hpp"

namespace tandem {
namespace {

BatchNormStats fresh_stats(std::size_t channels) { return {Tensor({channels}, 0.0), Tensor({channels}, 1.0)}; }

Parameter conv_param(const std::string& name, std::size_t out, std::size_t in, std::size_t k, Rng& rng) {
  return Parameter(name, he_normal({out, in, k, k}, in * k * k, rng));
}

}  // namespace

EncoderConfig EncoderConfig::desk() {
  EncoderConfig c;
  // 0.3 after every conv keeps 16..64-channel maps from learning the corpus.
  c.dropout = 0.0;
  return c;
}

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.input_size = 224;
  c.stem_width = 16;
  c.base_width = 16;
  c.widen_factor = 4;
  c.num_stages = 3;
  c.blocks_per_stage = 2;
  c.stem_stride = 2;
  c.stem_pool = 2;
  return c;
}

EncoderConfig EncoderConfig::toy() {
  EncoderConfig c;
  c.input_size = 4;
  c.stem_width = 4;
  c.base_width = 4;
  c.widen_factor = 1;
  c.num_stages = 1;
  c.blocks_per_stage = 1;
  c.stem_stride = 2;
  c.stem_pool = 1;
  return c;
}

std::size_t EncoderConfig::grid_side() const {
  const std::size_t down = stem_stride * stem_pool * (std::size_t{1} << (num_stages - 1));
  return input_size / down;
}

void EncoderConfig::validate() const {
  if (num_stages == 0 || blocks_per_stage == 0) throw ConfigError("encoder: need at least one stage and one block");
  if (stem_stride == 0 || stem_pool == 0 || base_width == 0 || widen_factor == 0 || stem_width == 0) {
    throw ConfigError("encoder: widths, strides and pool size must be positive");
  }
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("encoder: dropout must lie in [0, 1)");
  const std::size_t down = stem_stride * stem_pool * (std::size_t{1} << (num_stages - 1));
  if (input_size == 0 || input_size % down != 0) {
    throw ConfigError("encoder: input_size " + std::to_string(input_size) + " is not divisible by the total stride " +
                      std::to_string(down));
  }
}

ResidualBlock::ResidualBlock(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                             bool projection, Rng& rng)
    : name_(std::move(name)),
      in_(in_channels),
      out_(out_channels),
      stride_(stride),
      bn1_gamma_(name_ + "/bn1/gamma", Tensor({in_channels}, 1.0)),
      bn1_beta_(name_ + "/bn1/beta", Tensor({in_channels}, 0.0)),
      conv1_(conv_param(name_ + "/conv1/weight", out_channels, in_channels, 3, rng)),
      bn2_gamma_(name_ + "/bn2/gamma", Tensor({out_channels}, 1.0)),
      bn2_beta_(name_ + "/bn2/beta", Tensor({out_channels}, 0.0)),
      conv2_(conv_param(name_ + "/conv2/weight", out_channels, out_channels, 3, rng)),
      stats1_(fresh_stats(in_channels)),
      stats2_(fresh_stats(out_channels)) {
  if (projection) shortcut_ = conv_param(name_ + "/shortcut/weight", out_channels, in_channels, 1, rng);
}

Var ResidualBlock::forward(const Var& x, bool training, Real dropout_rate, Rng& rng) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != in_) {
    throw DimensionError(name_ + ": expected " + std::to_string(in_) + " input channels, got " + to_string(s));
  }
  Tape& t = x.tape();
  Var pre = relu(batch_norm2d(x, t.param(bn1_gamma_), t.param(bn1_beta_), stats1_, training));
  Var shortcut = x;
  if (shortcut_) {
    shortcut = conv2d(pre, t.param(*shortcut_), {.stride = stride_, .padding = 0});
  } else if (in_ != out_ || stride_ != 1) {
    throw DimensionError(name_ + ": identity shortcut cannot map " + std::to_string(in_) + " channels to " +
                         std::to_string(out_) + " with stride " + std::to_string(stride_));
  }
  Var y = conv2d(pre, t.param(conv1_), {.stride = stride_, .padding = 1});
  y = dropout(y, dropout_rate, training, rng);
  y = relu(batch_norm2d(y, t.param(bn2_gamma_), t.param(bn2_beta_), stats2_, training));
  y = conv2d(y, t.param(conv2_), {.stride = 1, .padding = 1});
  y = dropout(y, dropout_rate, training, rng);
  return add(shortcut, y);
}

void ResidualBlock::collect(ParameterList& out) {
  out.insert(out.end(), {&bn1_gamma_, &bn1_beta_, &conv1_, &bn2_gamma_, &bn2_beta_, &conv2_});
  if (shortcut_) out.push_back(&*shortcut_);
}

void ResidualBlock::collect_buffers(BufferList& out) {
  out.push_back({name_ + "/bn1/running_mean", &stats1_.mean});
  out.push_back({name_ + "/bn1/running_var", &stats1_.var});
  out.push_back({name_ + "/bn2/running_mean", &stats2_.mean});
  out.push_back({name_ + "/bn2/running_var", &stats2_.var});
}

ImageEncoder::ImageEncoder(const EncoderConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  stem_ = conv_param("encoder/stem/weight", config_.stem_width, 3, 3, rng);
  std::size_t in = config_.stem_width;
  blocks_.reserve(config_.num_stages * config_.blocks_per_stage);
  for (std::size_t s = 0; s < config_.num_stages; ++s) {
    const std::size_t width = config_.stage_width(s);
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      const std::size_t stride = (b == 0 && s > 0) ? 2 : 1;
      const bool projection = in != width || stride != 1;
      blocks_.emplace_back("encoder/stage" + std::to_string(s) + "/block" + std::to_string(b), in, width, stride,
                           projection, rng);
      in = width;
    }
  }
  final_gamma_ = Parameter("encoder/final_bn/gamma", Tensor({in}, 1.0));
  final_beta_ = Parameter("encoder/final_bn/beta", Tensor({in}, 0.0));
  final_stats_ = fresh_stats(in);
}

Var ImageEncoder::forward(const Var& images, bool training, Rng& rng, std::vector<Shape>* trace) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != config_.input_size || s[3] != config_.input_size) {
    throw DimensionError("encoder: expected images [B x 3 x " + std::to_string(config_.input_size) + " x " +
                         std::to_string(config_.input_size) + "], got " + to_string(s));
  }
  Tape& t = images.tape();
  Var x = conv2d(images, t.param(stem_), {.stride = config_.stem_stride, .padding = 1});
  if (config_.stem_pool > 1) x = avg_pool2d(x, config_.stem_pool);
  if (trace) trace->push_back(x.shape());
  for (ResidualBlock& block : blocks_) {
    x = block.forward(x, training, config_.dropout, rng);
    if (trace) trace->push_back(x.shape());
  }
  return relu(batch_norm2d(x, t.param(final_gamma_), t.param(final_beta_), final_stats_, training));
}

std::vector<Shape> ImageEncoder::planned_shapes(std::size_t batch) const {
  std::vector<Shape> plan;
  std::size_t side = config_.input_size / config_.stem_stride / config_.stem_pool;
  plan.push_back({batch, config_.stem_width, side, side});
  for (std::size_t s = 0; s < config_.num_stages; ++s) {
    for (std::size_t b = 0; b < config_.blocks_per_stage; ++b) {
      if (b == 0 && s > 0) side /= 2;
      plan.push_back({batch, config_.stage_width(s), side, side});
    }
  }
  return plan;
}

Var ImageEncoder::visual_features(const Var& maps, std::size_t b) const {
  return reshape(batch_item(maps, b), {config_.channels(), config_.grid_area()});
}

VisualFeatures ImageEncoder::encode_image(const Var& image, bool training, Rng& rng, std::string source_id) {
  const Shape& s = image.shape();
  if (s.size() != 3) throw DimensionError("encode_image: expected [3 x H x W], got " + to_string(s));
  Var batch = reshape(image, {1, s[0], s[1], s[2]});
  return {visual_features(forward(batch, training, rng), 0), std::move(source_id)};
}

void ImageEncoder::collect(ParameterList& out) {
  out.push_back(&stem_);
  for (ResidualBlock& b : blocks_) b.collect(out);
  out.push_back(&final_gamma_);
  out.push_back(&final_beta_);
}

void ImageEncoder::collect_buffers(BufferList& out) {
  for (ResidualBlock& b : blocks_) b.collect_buffers(out);
  out.push_back({"encoder/final_bn/running_mean", &final_stats_.mean});
  out.push_back({"encoder/final_bn/running_var", &final_stats_.var});
}

}  // namespace tandem
