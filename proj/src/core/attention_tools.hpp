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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/model.hpp"

namespace tandem {

/// Row c, column j < N: mean text attention alpha[G + j] over samples of true
/// class c (evaluated with text). Column N: mean over all N sentences.
/// Classes without samples get NaN cells and a warning.
struct TextAttentionStats {
  Tensor table;  // [classes x (N + 1)]
  std::vector<std::string> warnings;
};

TextAttentionStats text_attention_stats(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices);
std::string text_attention_csv(const TextAttentionStats& stats);

/// Attention weights of one sample evaluated with or without text.
Tensor sample_attention(TandemModel& model, const Sample& sample, bool text_available);

/// Bilinear resize of a [h x w] grid to [out x out]; corner samples map onto
/// corner samples (align-corners convention).
Tensor upsample_bilinear(const Tensor& grid, std::size_t out_size);

struct AttentionMap {
  Tensor values;                     // [out x out], upsampled weights
  std::vector<std::uint8_t> pixels;  // min-max normalized to 0..255, row-major
};

/// Reshapes the first g*g weights row-major to g x g and upsamples. A map
/// without contrast comes out uniform gray (128). DimensionError if alpha has
/// fewer than g*g entries.
AttentionMap export_attention_map(std::span<const Real> alpha, std::size_t grid_side, std::size_t out_size);

void write_pgm(const std::filesystem::path& path, const AttentionMap& map);
/// "index,kind,label,weight" per entry of alpha: regions first (row-major
/// grid index), then sentences labeled by feature-type index.
std::string attention_csv(std::span<const Real> alpha, std::size_t grid_side);

}  // namespace tandem
