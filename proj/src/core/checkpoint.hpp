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
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/key_values.hpp"
#include "core/model.hpp"
#include "core/optimizer.hpp"

namespace tandem {

/// Named records, each either an f64 tensor or an opaque byte string.
///
/// File layout (little-endian): "TNDMCKPT", u32 version, u32 record count,
/// then per record: u32 name length, name, u8 dtype (0 = f64, 1 = bytes),
/// u32 rank, u64 dims[rank], raw data. Byte records have rank 1.
class Bundle {
 public:
  void put(const std::string& name, const Tensor& t);
  void put_bytes(const std::string& name, std::string bytes);

  bool has(const std::string& name) const;
  const Tensor& tensor(const std::string& name) const;
  const std::string& bytes(const std::string& name) const;
  std::vector<std::string> names() const;

  std::vector<std::uint8_t> serialize() const;
  static Bundle parse(std::span<const std::uint8_t> data);

 private:
  void claim(const std::string& name);

  std::vector<std::string> order_;
  std::map<std::string, Tensor> tensors_;
  std::map<std::string, std::string> blobs_;
};

struct TrainingState {
  std::size_t epoch = 0;
  Real best_score = -1;
  /// std::mt19937_64 textual state.
  std::string rng_state;
  std::vector<NamedState> optimizer;
  /// Config echo; must contain the model.* and encoder.* keys.
  KeyValues config;
};

Bundle make_checkpoint(TandemModel& model, const TrainingState& state);
void save_checkpoint(const std::filesystem::path& path, TandemModel& model, const TrainingState& state);

struct LoadedCheckpoint {
  std::unique_ptr<TandemModel> model;
  TrainingState state;
};

LoadedCheckpoint restore_checkpoint(const Bundle& bundle);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameter values and buffers from `src` into `dst` (same config).
void copy_weights(TandemModel& src, TandemModel& dst);

}  // namespace tandem
