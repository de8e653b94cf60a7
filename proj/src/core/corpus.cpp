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
#include "core/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "core/binary_io.hpp"
#include "core/errors.hpp"
#include "core/parallel.hpp"
#include "core/rng.hpp"

namespace tandem {
namespace {

constexpr char kMagic[] = "TNDMCORP";
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kGridSide = 4;  // cells per image side
constexpr Real kBackground = 0.1;

// One hue per feature type so feature zones are told apart by color as well
// as by texture.
constexpr Real kColors[kFeatureTypes][3] = {
    {0.9, 0.2, 0.6}, {0.3, 0.2, 0.9}, {0.2, 0.8, 0.3}, {0.9, 0.6, 0.1}, {0.2, 0.7, 0.9}};

Real texture(std::size_t feature, Real x, Real y) {
  auto frac = [](Real v) { return v - std::floor(v); };
  const Real dx = x - 0.5, dy = y - 0.5;
  const Real r2 = dx * dx + dy * dy;
  switch (feature) {
    case kPleomorphism:
      return r2 < 0.12 ? 1.0 : 0.25;
    case kCrowding:
      return (frac(2 * x) < 0.5 && frac(2 * y) < 0.5) ? 1.0 : 0.2;
    case kPolarity:
      return frac(2 * x) < 0.5 ? 1.0 : 0.2;
    case kMitosis:
      return (static_cast<int>(std::floor(2 * x) + std::floor(2 * y)) % 2) ? 1.0 : 0.2;
    default:
      return (r2 > 0.04 && r2 < 0.16) ? 1.0 : 0.2;
  }
}

std::uint8_t to_u8(Real v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

struct RawSample {
  Sample sample;
  std::vector<std::vector<std::string>> report_sentences;
};

RawSample render_sample(const GeneratorSpec& spec, const TemplateBank& bank, std::uint32_t patient, Rng& rng) {
  RawSample raw;
  Sample& s = raw.sample;
  s.patient_id = patient;
  for (auto& level : s.severity) level = static_cast<std::uint8_t>(uniform_index(rng, spec.levels));
  s.label = static_cast<std::uint32_t>(class_rule(s.severity, spec.levels));

  const std::size_t size = spec.image_size;
  const std::size_t cell = size / kGridSide;
  const Real top = static_cast<Real>(spec.levels - 1);
  std::vector<Real> cell_intensity(kGridSide * kGridSide, 0.0);
  for (std::size_t f = 0; f < kFeatureTypes; ++f) {
    Real mean = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      const Real jittered = s.severity[f] + spec.noise * normal01(rng);
      mean += jittered / 3;
      cell_intensity[3 * f + k] = std::clamp(jittered / top, 0.0, 1.0);
    }
    s.observed[f] = static_cast<float>(mean);
  }

  s.image.resize(3 * size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t cell_index = (y / cell) * kGridSide + x / cell;
      const std::size_t feature = cell_index / 3;
      const Real lx = (static_cast<Real>(x % cell) + 0.5) / static_cast<Real>(cell);
      const Real ly = (static_cast<Real>(y % cell) + 0.5) / static_cast<Real>(cell);
      for (std::size_t c = 0; c < 3; ++c) {
        Real v = kBackground;
        if (feature < kFeatureTypes) v += cell_intensity[cell_index] * kColors[feature][c] * texture(feature, lx, ly);
        v += spec.pixel_noise * normal01(rng);
        s.image[(c * size + y) * size + x] = to_u8(v);
      }
    }
  }

  raw.report_sentences.resize(spec.reports_per_sample);
  for (auto& sentences : raw.report_sentences) {
    for (std::size_t f = 0; f < kFeatureTypes; ++f) {
      const auto& variants = bank[f][s.severity[f]];
      sentences.push_back(variants[uniform_index(rng, variants.size())]);
    }
  }
  return raw;
}

std::string normalized(const std::string& sentence) {
  std::string out;
  for (const auto& w : tokenize(sentence)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

const char* feature_name(std::size_t feature) {
  static constexpr const char* kNames[] = {"pleomorphism", "crowding", "polarity", "mitosis", "nucleoli"};
  if (feature >= kFeatureTypes) throw InputError("feature index out of range");
  return kNames[feature];
}

const char* class_name(std::size_t label) {
  static constexpr const char* kNames[] = {"normal", "low_grade", "high_grade", "insufficient"};
  if (label >= kClasses) throw InputError("class index out of range");
  return kNames[label];
}

std::size_t class_rule(const Severity& s, std::size_t levels) {
  const std::size_t top = levels - 1;
  if (s[kCrowding] == top) return kHighGrade;
  if (s[kPolarity] == top) return kInsufficient;
  if (s[kPleomorphism] + s[kMitosis] >= 2) return kLowGrade;
  return kNormal;
}

TemplateBank default_templates() {
  return {
      {{"The nuclei show no pleomorphism at all.", "Nuclear size and shape appear uniform throughout."},
       {"The nuclei show mild to moderate pleomorphism.", "Nuclear size varies moderately across the sample."},
       {"The nuclei show marked and severe pleomorphism.", "Nuclear size and shape vary greatly throughout."}},
      {{"The cells are not crowded in this region.", "There is no evidence of cell crowding here."},
       {"The cells show moderate crowding in some areas.", "Cell crowding is moderate and focal in distribution."},
       {"The cells are severely crowded and overlapping throughout.", "There is marked cell crowding across the tissue."}},
      {{"Cell polarity is completely preserved throughout the sample.", "The cells maintain their normal polarity."},
       {"Cell polarity is partially lost in places.", "There is some loss of normal cell polarity."},
       {"Cell polarity is completely lost in this sample.", "The cells show total loss of polarity."}},
      {{"No mitotic figures are seen in the sample.", "Mitosis is absent on careful inspection."},
       {"Occasional mitotic figures are seen in the sample.", "Mitosis is present but rare in this sample."},
       {"Numerous mitotic figures are seen throughout the sample.", "Mitosis is frequent and easily found everywhere."}},
      {{"Nucleoli are inconspicuous in most of the cells.", "The nucleoli are not prominent at all."},
       {"Nucleoli are visible in some of the cells.", "The nucleoli are moderately prominent in places."},
       {"Nucleoli are very prominent in most of the cells.", "The nucleoli are large and highly prominent."}},
  };
}

void GeneratorSpec::validate(const TemplateBank& bank) const {
  if (num_patients == 0 || samples_per_patient == 0) throw ConfigError("generator: corpus must not be empty");
  if (image_size == 0 || image_size % kGridSide != 0) {
    throw ConfigError("generator: image_size must be a positive multiple of " + std::to_string(kGridSide));
  }
  if (levels < 2 || levels > 255) throw ConfigError("generator: levels must be in [2, 255]");
  if (reports_per_sample == 0) throw ConfigError("generator: reports_per_sample must be positive");
  if (!(noise >= 0) || !(pixel_noise >= 0)) throw ConfigError("generator: noise levels must be non-negative");
  if (bank.size() != kFeatureTypes) throw ConfigError("generator: template bank must cover all 5 feature types");
  for (std::size_t f = 0; f < kFeatureTypes; ++f) {
    if (bank[f].size() < levels) {
      throw ConfigError(std::string("generator: template bank has no sentences for ") + feature_name(f) + " level " +
                        std::to_string(bank[f].size()));
    }
    for (std::size_t l = 0; l < levels; ++l) {
      if (bank[f][l].empty()) {
        throw ConfigError(std::string("generator: template bank has no sentences for ") + feature_name(f) +
                          " level " + std::to_string(l));
      }
    }
  }
}

Corpus generate_corpus(const GeneratorSpec& spec, const TemplateBank& bank) {
  spec.validate(bank);
  std::vector<std::vector<RawSample>> per_patient(spec.num_patients);
  parallel_for(spec.num_patients, [&](std::size_t p, std::size_t) {
    Rng rng = derive_rng(spec.seed, p);
    per_patient[p].reserve(spec.samples_per_patient);
    for (std::size_t i = 0; i < spec.samples_per_patient; ++i) {
      per_patient[p].push_back(render_sample(spec, bank, static_cast<std::uint32_t>(p), rng));
    }
  });

  Corpus corpus;
  corpus.spec = spec;
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& patient : per_patient) {
    for (const auto& raw : patient) {
      for (const auto& sentences : raw.report_sentences) {
        for (const auto& s : sentences) token_lists.push_back(tokenize(s));
      }
    }
  }
  corpus.vocab = Vocabulary::build(token_lists);
  for (auto& patient : per_patient) {
    for (auto& raw : patient) {
      for (const auto& sentences : raw.report_sentences) {
        raw.sample.reports.push_back(encode_report_text(corpus.vocab, sentences));
      }
      corpus.samples.push_back(std::move(raw.sample));
    }
  }
  return corpus;
}

std::vector<std::uint8_t> serialize_corpus(const Corpus& c) {
  ByteWriter w;
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  const auto& s = c.spec;
  w.u32(static_cast<std::uint32_t>(s.num_patients));
  w.u32(static_cast<std::uint32_t>(s.samples_per_patient));
  w.u32(static_cast<std::uint32_t>(s.image_size));
  w.u32(static_cast<std::uint32_t>(s.levels));
  w.u32(static_cast<std::uint32_t>(s.reports_per_sample));
  w.f64(s.noise);
  w.f64(s.pixel_noise);
  w.u64(s.seed);
  w.str(c.vocab.serialize());
  w.u32(static_cast<std::uint32_t>(c.samples.size()));
  const std::size_t pixels = 3 * s.image_size * s.image_size;
  for (const auto& sample : c.samples) {
    if (sample.image.size() != pixels) throw DimensionError("corpus: image size does not match header");
    w.u32(sample.label);
    w.bytes(sample.severity.data(), sample.severity.size());
    w.u32(sample.patient_id);
    for (float v : sample.observed) w.f32(v);
    w.bytes(sample.image.data(), pixels);
    w.u32(static_cast<std::uint32_t>(sample.reports.size()));
    for (const auto& r : sample.reports) {
      w.u32(static_cast<std::uint32_t>(r.tokens.size()));
      for (TokenId t : r.tokens) w.u32(t);
    }
  }
  return w.take();
}

Corpus parse_corpus(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic(std::string_view(kMagic, 8), "corpus header");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported corpus version " + std::to_string(version) + " (expected " +
                          std::to_string(kVersion) + ")",
                      version_at);
  }
  Corpus c;
  auto& s = c.spec;
  s.num_patients = r.u32("num_patients");
  s.samples_per_patient = r.u32("samples_per_patient");
  const std::size_t size_at = r.offset();
  s.image_size = r.u32("image_size");
  if (s.image_size == 0 || s.image_size > 4096) throw FormatError("implausible image size", size_at);
  s.levels = r.u32("levels");
  s.reports_per_sample = r.u32("reports_per_sample");
  s.noise = r.f64("noise");
  s.pixel_noise = r.f64("pixel_noise");
  s.seed = r.u64("seed");
  const std::size_t vocab_at = r.offset();
  const std::string vocab_text = r.str("vocabulary");
  try {
    c.vocab = Vocabulary::parse(vocab_text);
  } catch (const FormatError& e) {
    throw FormatError(std::string("corpus vocabulary: ") + e.what(), vocab_at + 4 + e.offset());
  }
  const std::uint32_t count = r.u32("sample count");
  const std::size_t pixels = 3 * s.image_size * s.image_size;
  c.samples.reserve(std::min<std::size_t>(count, r.remaining() / (pixels + 1)));
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample sample;
    const std::size_t label_at = r.offset();
    sample.label = r.u32("label");
    if (sample.label >= kClasses) throw FormatError("label out of range", label_at);
    r.bytes(sample.severity.data(), sample.severity.size(), "severity");
    sample.patient_id = r.u32("patient_id");
    for (float& v : sample.observed) v = r.f32("observed severity");
    sample.image.resize(pixels);
    r.bytes(sample.image.data(), pixels, "image");
    const std::uint32_t n_reports = r.u32("report count");
    for (std::uint32_t k = 0; k < n_reports; ++k) {
      const std::size_t report_at = r.offset();
      const std::uint32_t len = r.u32("report length");
      if (static_cast<std::size_t>(len) * 4 > r.remaining()) throw FormatError("truncated report", report_at);
      std::vector<TokenId> tokens(len);
      for (auto& t : tokens) {
        const std::size_t tok_at = r.offset();
        t = r.u32("token");
        if (t >= c.vocab.size()) throw FormatError("token id outside vocabulary", tok_at);
      }
      try {
        sample.reports.push_back(TokenizedReport::from_tokens(std::move(tokens), kFeatureTypes));
      } catch (const FormatError& e) {
        throw FormatError(e.what(), report_at);
      }
    }
    c.samples.push_back(std::move(sample));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after corpus", r.offset());
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_corpus(corpus));
}

Corpus read_corpus(const std::filesystem::path& path) { return parse_corpus(read_file_bytes(path)); }

Split patient_split(const Corpus& corpus, Real test_fraction, Real val_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0 && test_fraction < 1 && val_fraction >= 0 && val_fraction < 1)) {
    throw ConfigError("split fractions must be in [0, 1)");
  }
  std::set<std::uint32_t> ids;
  for (const auto& s : corpus.samples) ids.insert(s.patient_id);
  std::vector<std::uint32_t> patients(ids.begin(), ids.end());
  Rng rng = derive_rng(seed, 0x5eed);
  for (std::size_t i = patients.size(); i > 1; --i) std::swap(patients[i - 1], patients[uniform_index(rng, i)]);
  const auto n = patients.size();
  const auto n_test = static_cast<std::size_t>(std::lround(static_cast<Real>(n) * test_fraction));
  const auto n_val = static_cast<std::size_t>(std::lround(static_cast<Real>(n - n_test) * val_fraction));
  std::set<std::uint32_t> test(patients.begin(), patients.begin() + static_cast<long>(n_test));
  std::set<std::uint32_t> val(patients.begin() + static_cast<long>(n_test),
                              patients.begin() + static_cast<long>(n_test + n_val));
  Split split;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto id = corpus.samples[i].patient_id;
    if (test.count(id)) {
      split.test.push_back(i);
    } else if (val.count(id)) {
      split.val.push_back(i);
    } else {
      split.train.push_back(i);
    }
  }
  return split;
}

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> chw, std::size_t size) {
  if (chw.size() != 3 * size * size) throw DimensionError("write_ppm: expected 3 x size x size bytes");
  std::string header = "P6\n" + std::to_string(size) + " " + std::to_string(size) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + chw.size());
  for (std::size_t i = 0; i < size * size; ++i) {
    for (std::size_t c = 0; c < 3; ++c) out.push_back(chw[c * size * size + i]);
  }
  write_file_bytes(path, out);
}

std::vector<int> extract_severity_slots(const std::vector<std::string>& sentences, const TemplateBank& bank) {
  std::vector<int> slots(kFeatureTypes, -1);
  for (std::size_t f = 0; f < std::min(sentences.size(), kFeatureTypes); ++f) {
    const std::string text = normalized(sentences[f]);
    for (std::size_t level = 0; level < bank[f].size() && slots[f] < 0; ++level) {
      for (const auto& tmpl : bank[f][level]) {
        if (normalized(tmpl) == text) {
          slots[f] = static_cast<int>(level);
          break;
        }
      }
    }
  }
  return slots;
}

}  // namespace tandem
