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
#include <optional>
#include <string>
#include <vector>

#include "core/init.hpp"
#include "core/nn_ops.hpp"
#include "core/tape.hpp"

namespace tandem {

/// Layout of a pre-activation wide residual network. Stage s has
/// base_width * widen_factor * 2^s channels; stage 0 keeps the spatial size,
/// later stages halve it. The stem is a 3x3 conv with `stem_stride`,
/// optionally followed by non-overlapping average pooling.
struct EncoderConfig {
  std::size_t input_size = 32;
  std::size_t stem_width = 16;
  std::size_t base_width = 8;
  std::size_t widen_factor = 2;
  std::size_t num_stages = 3;
  std::size_t blocks_per_stage = 2;
  std::size_t stem_stride = 2;
  std::size_t stem_pool = 1;
  Real dropout = 0.3;

  /// 32x32 input, C = 64, G = 4x4, no dropout.
  static EncoderConfig desk();
  /// WRN16-4 behind a stride-4 stem: 224x224 input, C = 256, G = 14x14.
  static EncoderConfig full_scale();
  /// Stem conv plus one residual block: 4x4 input, C = 4, G = 2x2.
  static EncoderConfig toy();

  std::size_t stage_width(std::size_t stage) const { return base_width * widen_factor << stage; }
  /// Feature dimension C of V.
  std::size_t channels() const { return stage_width(num_stages - 1); }
  std::size_t grid_side() const;
  /// G = grid_side^2.
  std::size_t grid_area() const { return grid_side() * grid_side(); }

  /// Throws ConfigError when the layout cannot produce an integral grid.
  void validate() const;
};

/// Output of the encoder for one image: V in R^{C x G}, regions row-major.
struct VisualFeatures {
  Var v;
  std::string source_id;
};

/// Pre-activation residual block: BN -> ReLU -> conv3x3(stride) -> dropout
/// -> BN -> ReLU -> conv3x3 -> dropout, added to an identity or 1x1
/// projection shortcut.
class ResidualBlock {
 public:
  ResidualBlock(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                bool projection, Rng& rng);

  Var forward(const Var& x, bool training, Real dropout_rate, Rng& rng);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t stride() const { return stride_; }
  bool has_projection() const { return shortcut_.has_value(); }

  Parameter& conv1() { return conv1_; }
  Parameter& conv2() { return conv2_; }

  void collect(ParameterList& out);
  void collect_buffers(BufferList& out);

 private:
  std::string name_;
  std::size_t in_, out_, stride_;
  Parameter bn1_gamma_, bn1_beta_, conv1_, bn2_gamma_, bn2_beta_, conv2_;
  std::optional<Parameter> shortcut_;
  BatchNormStats stats1_, stats2_;
};

class ImageEncoder {
 public:
  ImageEncoder(const EncoderConfig& config, Rng& rng);

  const EncoderConfig& config() const { return config_; }

  /// images: [B x 3 x S x S] -> feature maps [B x C x g x g]. When `trace` is
  /// given it receives the shape after the stem and after every block.
  Var forward(const Var& images, bool training, Rng& rng, std::vector<Shape>* trace = nullptr);

  /// Shapes forward() is expected to produce, in trace order.
  std::vector<Shape> planned_shapes(std::size_t batch) const;

  /// Slices item b of forward()'s output into V of shape [C x G].
  Var visual_features(const Var& maps, std::size_t b) const;

  /// Single-image convenience: img [3 x S x S] -> V.
  VisualFeatures encode_image(const Var& image, bool training, Rng& rng, std::string source_id = {});

  std::vector<ResidualBlock>& blocks() { return blocks_; }
  Parameter& stem() { return stem_; }

  void collect(ParameterList& out);
  void collect_buffers(BufferList& out);

 private:
  EncoderConfig config_;
  Parameter stem_;
  std::vector<ResidualBlock> blocks_;
  Parameter final_gamma_, final_beta_;
  BatchNormStats final_stats_;
};

}  // namespace tandem
