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
#include "core/attention_tools.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/binary_io.hpp"
#include "core/errors.hpp"
#include "core/parallel.hpp"

namespace tandem {

Tensor sample_attention(TandemModel& model, const Sample& sample, bool text_available) {
  if (model.config().kind != ModelKind::kTandem) throw ConfigError("image-only models have no attention");
  Tape tape;
  Rng unused(0);
  ForwardOptions opts;
  opts.policy = {model.config().drop_rate, Mode::kEval, text_available};
  opts.random_report = false;
  const Sample* one[] = {&sample};
  return forward_batch(tape, model, one, opts, unused).samples[0].attention.alpha.value();
}

TextAttentionStats text_attention_stats(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("text_attention_stats: empty sample set");
  const std::size_t n = model.config().sentences;
  const std::size_t g = model.config().encoder.grid_area();
  const std::size_t classes = model.config().classes;
  std::vector<Tensor> alphas(indices.size());
  parallel_for(indices.size(), [&](std::size_t i, std::size_t) {
    alphas[i] = sample_attention(model, corpus.samples.at(indices[i]), true);
  });

  TextAttentionStats out;
  out.table = Tensor({classes, n + 1}, 0.0);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t label = corpus.samples[indices[i]].label;
    ++counts[label];
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out.table.at(label, j) += alphas[i][g + j];
      total += alphas[i][g + j];
    }
    out.table.at(label, n) += total / static_cast<Real>(n);
  }
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j <= n; ++j) {
      out.table.at(c, j) = counts[c] ? out.table.at(c, j) / static_cast<Real>(counts[c])
                                     : std::numeric_limits<Real>::quiet_NaN();
    }
    if (!counts[c]) out.warnings.push_back("no samples of class " + std::to_string(c) + "; row left as NaN");
  }
  return out;
}

std::string text_attention_csv(const TextAttentionStats& stats) {
  const std::size_t cols = stats.table.dim(1);
  std::string out = "class";
  for (std::size_t j = 0; j + 1 < cols; ++j) out += std::string(",") + (j < kFeatureTypes ? feature_name(j) : "s" + std::to_string(j));
  out += ",overall\n";
  for (std::size_t c = 0; c < stats.table.dim(0); ++c) {
    out += c < kClasses ? class_name(c) : std::to_string(c);
    for (std::size_t j = 0; j < cols; ++j) out += "," + format_real(stats.table.at(c, j));
    out += "\n";
  }
  return out;
}

Tensor upsample_bilinear(const Tensor& grid, std::size_t out_size) {
  if (grid.rank() != 2 || grid.size() == 0) throw DimensionError("upsample_bilinear: expected a non-empty matrix");
  if (out_size == 0) throw DimensionError("upsample_bilinear: output size must be positive");
  const std::size_t h = grid.dim(0), w = grid.dim(1);
  Tensor out({out_size, out_size}, 0.0);
  auto coord = [&](std::size_t i, std::size_t src) {
    return out_size == 1 ? 0.0 : static_cast<Real>(i) * static_cast<Real>(src - 1) / static_cast<Real>(out_size - 1);
  };
  for (std::size_t y = 0; y < out_size; ++y) {
    const Real fy = coord(y, h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), h - 1);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const Real ty = fy - static_cast<Real>(y0);
    for (std::size_t x = 0; x < out_size; ++x) {
      const Real fx = coord(x, w);
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), w - 1);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const Real tx = fx - static_cast<Real>(x0);
      const Real top = (1 - tx) * grid.at(y0, x0) + tx * grid.at(y0, x1);
      const Real bottom = (1 - tx) * grid.at(y1, x0) + tx * grid.at(y1, x1);
      out.at(y, x) = (1 - ty) * top + ty * bottom;
    }
  }
  return out;
}

AttentionMap export_attention_map(std::span<const Real> alpha, std::size_t grid_side, std::size_t out_size) {
  const std::size_t g2 = grid_side * grid_side;
  if (grid_side == 0 || g2 > alpha.size()) {
    throw DimensionError("export_attention_map: grid " + std::to_string(grid_side) + "x" + std::to_string(grid_side) +
                         " needs " + std::to_string(g2) + " weights, alpha has " + std::to_string(alpha.size()));
  }
  Tensor grid({grid_side, grid_side}, std::vector<Real>(alpha.begin(), alpha.begin() + static_cast<long>(g2)));
  AttentionMap map;
  map.values = upsample_bilinear(grid, out_size);
  const auto v = map.values.data();
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const Real lo = *lo_it, hi = *hi_it;
  map.pixels.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    map.pixels[i] = hi > lo ? static_cast<std::uint8_t>(std::lround(255.0 * (v[i] - lo) / (hi - lo))) : 128;
  }
  return map;
}

void write_pgm(const std::filesystem::path& path, const AttentionMap& map) {
  const std::size_t side = map.values.dim(0);
  const std::string header = "P5\n" + std::to_string(side) + " " + std::to_string(side) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), map.pixels.begin(), map.pixels.end());
  write_file_bytes(path, out);
}

std::string attention_csv(std::span<const Real> alpha, std::size_t grid_side) {
  const std::size_t g2 = grid_side * grid_side;
  if (g2 > alpha.size()) throw DimensionError("attention_csv: alpha shorter than the region grid");
  std::string out = "index,kind,label,weight\n";
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (i < g2) {
      out += std::to_string(i) + ",region," + std::to_string(i) + "," + format_real(alpha[i]) + "\n";
    } else {
      out += std::to_string(i) + ",sentence," + std::to_string(i - g2) + "," + format_real(alpha[i]) + "\n";
    }
  }
  return out;
}

}  // namespace tandem
