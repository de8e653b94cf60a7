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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "core/vocabulary.hpp"

namespace tandem {

inline constexpr std::size_t kFeatureTypes = 5;
inline constexpr std::size_t kClasses = 4;

enum FeatureType : std::size_t { kPleomorphism = 0, kCrowding = 1, kPolarity = 2, kMitosis = 3, kNucleoli = 4 };
enum DiagnosisClass : std::size_t { kNormal = 0, kLowGrade = 1, kHighGrade = 2, kInsufficient = 3 };

const char* feature_name(std::size_t feature);
const char* class_name(std::size_t label);

using Severity = std::array<std::uint8_t, kFeatureTypes>;

/// Deterministic label for a severity vector (levels 0..levels-1, the top
/// level being levels-1):
///   crowding at top level             -> high grade
///   else polarity at top level        -> insufficient information
///   else pleomorphism + mitosis >= 2  -> low grade
///   else                              -> normal
std::size_t class_rule(const Severity& severity, std::size_t levels);

/// Sentence templates indexed [feature][level][variant].
using TemplateBank = std::vector<std::vector<std::vector<std::string>>>;
TemplateBank default_templates();

struct GeneratorSpec {
  std::size_t num_patients = 40;
  std::size_t samples_per_patient = 25;
  std::size_t image_size = 32;
  std::size_t levels = 3;
  std::size_t reports_per_sample = 5;
  /// Standard deviation of the per-cell severity jitter, in level units.
  Real noise = 0.5;
  /// Per-pixel Gaussian noise in [0, 1] intensity units.
  Real pixel_noise = 0.04;
  std::uint64_t seed = 1;

  /// ConfigError on empty corpora, image sizes not divisible into the 4x4
  /// cell grid, fewer than 2 levels, or a bank without every level.
  void validate(const TemplateBank& bank) const;
};

struct Sample {
  std::vector<std::uint8_t> image;  // 3 x S x S, channel-major
  std::uint32_t label = 0;
  Severity severity{};
  std::uint32_t patient_id = 0;
  /// Mean jittered severity of each feature's cells, before clamping and
  /// rendering; the best any image reader could recover.
  std::array<float, kFeatureTypes> observed{};
  std::vector<TokenizedReport> reports;
};

struct Corpus {
  GeneratorSpec spec;
  Vocabulary vocab;
  std::vector<Sample> samples;

  std::size_t image_size() const { return spec.image_size; }
  std::size_t sentences() const { return kFeatureTypes; }
};

Corpus generate_corpus(const GeneratorSpec& spec, const TemplateBank& bank = default_templates());

std::vector<std::uint8_t> serialize_corpus(const Corpus& corpus);
/// FormatError (with byte offset) on bad magic, version mismatch, truncation
/// or trailing bytes.
Corpus parse_corpus(std::span<const std::uint8_t> bytes);
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

/// Sample indices per split; patients never straddle splits.
struct Split {
  std::vector<std::size_t> train, val, test;
};

/// Shuffles patient ids with `seed`, puts `test_fraction` of them in test and
/// `val_fraction` of the remainder in validation.
Split patient_split(const Corpus& corpus, Real test_fraction = 0.2, Real val_fraction = 0.2, std::uint64_t seed = 7);

/// Raw ASCII-free binary PPM (P6).
void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> chw, std::size_t size);

/// Maps each sentence of a decoded report back to a severity level by exact
/// template match; -1 where no template of that feature matches.
std::vector<int> extract_severity_slots(const std::vector<std::string>& sentences, const TemplateBank& bank);

}  // namespace tandem
