#include <gtest/gtest.h>

#include <filesystem>
#include <cmath>
#include <set>

#include "core/binary_io.hpp"
#include "core/corpus.hpp"
#include "core/errors.hpp"
#include "core/key_values.hpp"

namespace tandem {
namespace {

GeneratorSpec small_spec() {
  GeneratorSpec s;
  s.num_patients = 6;
  s.samples_per_patient = 5;
  s.seed = 11;
  return s;
}

// Written out from the class definitions rather than calling class_rule.
std::size_t oracle_label(const Severity& s) {
  if (s[1] == 2) return 2;
  if (s[2] == 2) return 3;
  if (s[0] + s[3] >= 2) return 1;
  return 0;
}

TEST(Corpus, SameSeedSameBytes) {
  const auto a = serialize_corpus(generate_corpus(small_spec()));
  const auto b = serialize_corpus(generate_corpus(small_spec()));
  EXPECT_EQ(a, b);
  GeneratorSpec other = small_spec();
  other.seed = 12;
  EXPECT_NE(a, serialize_corpus(generate_corpus(other)));
}

TEST(Corpus, RuleOnHandPickedSeverities) {
  EXPECT_EQ(class_rule({0, 0, 0, 0, 0}, 3), kNormal);
  EXPECT_EQ(class_rule({1, 1, 1, 1, 2}, 3), kLowGrade);
  EXPECT_EQ(class_rule({2, 0, 0, 0, 0}, 3), kLowGrade);
  EXPECT_EQ(class_rule({1, 0, 0, 0, 2}, 3), kNormal);
  EXPECT_EQ(class_rule({0, 2, 2, 0, 0}, 3), kHighGrade);
  EXPECT_EQ(class_rule({2, 1, 2, 2, 0}, 3), kInsufficient);
}

TEST(Corpus, RuleMatchesOracleOnAllSeverities) {
  for (int code = 0; code < 243; ++code) {
    Severity s{};
    int c = code;
    for (auto& v : s) {
      v = static_cast<std::uint8_t>(c % 3);
      c /= 3;
    }
    EXPECT_EQ(class_rule(s, 3), oracle_label(s)) << code;
  }
}

TEST(Corpus, SamplesReplayRuleAndReports) {
  const Corpus c = generate_corpus(small_spec());
  ASSERT_EQ(c.samples.size(), 30u);
  const TemplateBank bank = default_templates();
  for (const Sample& s : c.samples) {
    EXPECT_EQ(s.label, oracle_label(s.severity));
    EXPECT_EQ(s.image.size(), 3u * 32 * 32);
    ASSERT_EQ(s.reports.size(), 5u);
    for (const auto& r : s.reports) {
      const auto sentences = decode_sentences(c.vocab, r.tokens);
      ASSERT_EQ(sentences.size(), kFeatureTypes);
      const auto slots = extract_severity_slots(sentences, bank);
      for (std::size_t f = 0; f < kFeatureTypes; ++f) EXPECT_EQ(slots[f], s.severity[f]);
      EXPECT_EQ(r.sentence_ends.size(), kFeatureTypes);
    }
  }
}

TEST(Corpus, ClassesAllPresentAtFullSize) {
  const Corpus c = generate_corpus(GeneratorSpec{});
  ASSERT_EQ(c.samples.size(), 1000u);
  std::vector<std::size_t> counts(kClasses, 0);
  for (const Sample& s : c.samples) ++counts[s.label];
  for (std::size_t k = 0; k < kClasses; ++k) EXPECT_GT(counts[k], 50u) << class_name(k);
  EXPECT_LT(serialize_corpus(c).size(), 50u << 20);
}

TEST(Corpus, FileRoundTripIsLossless) {
  const Corpus c = generate_corpus(small_spec());
  const auto path = std::filesystem::temp_directory_path() / "tandem_test_corpus.bin";
  write_corpus(c, path);
  const Corpus back = read_corpus(path);
  EXPECT_EQ(serialize_corpus(back), serialize_corpus(c));
  ASSERT_EQ(back.samples.size(), c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].image, c.samples[i].image);
    EXPECT_EQ(back.samples[i].observed, c.samples[i].observed);
    EXPECT_EQ(back.samples[i].reports[3].tokens, c.samples[i].reports[3].tokens);
  }
  EXPECT_EQ(back.vocab.size(), c.vocab.size());
  std::filesystem::remove(path);
}

TEST(Corpus, TruncatedOrPaddedFilesRejected) {
  const auto bytes = serialize_corpus(generate_corpus(small_spec()));
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{40}, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_THROW(parse_corpus(std::span(bytes.data(), cut)), FormatError) << cut;
  }
  auto padded = bytes;
  padded.push_back(0);
  EXPECT_THROW(parse_corpus(padded), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse_corpus(bad_magic), FormatError);
}

TEST(Corpus, TruncationMessageCarriesOffset) {
  const auto bytes = serialize_corpus(generate_corpus(small_spec()));
  try {
    parse_corpus(std::span(bytes.data(), bytes.size() - 3));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
}

TEST(Corpus, MissingTemplateLevelIsConfigError) {
  TemplateBank bank = default_templates();
  bank[kMitosis].pop_back();
  EXPECT_THROW(generate_corpus(small_spec(), bank), ConfigError);
  GeneratorSpec s = small_spec();
  s.image_size = 30;
  EXPECT_THROW(generate_corpus(s), ConfigError);
  s = small_spec();
  s.num_patients = 0;
  EXPECT_THROW(generate_corpus(s), ConfigError);
}

TEST(Corpus, PatientSplitIsDisjointAndComplete) {
  const Corpus c = generate_corpus(GeneratorSpec{});
  const Split s = patient_split(c);
  EXPECT_EQ(s.train.size() + s.val.size() + s.test.size(), c.samples.size());
  auto patients = [&](const std::vector<std::size_t>& idx) {
    std::set<std::uint32_t> out;
    for (std::size_t i : idx) out.insert(c.samples[i].patient_id);
    return out;
  };
  const auto tr = patients(s.train), va = patients(s.val), te = patients(s.test);
  EXPECT_EQ(te.size(), 8u);
  EXPECT_EQ(va.size(), 6u);
  EXPECT_EQ(tr.size(), 26u);
  for (auto p : te) {
    EXPECT_FALSE(tr.count(p));
    EXPECT_FALSE(va.count(p));
  }
  for (auto p : va) EXPECT_FALSE(tr.count(p));
}

TEST(Corpus, ObservedTracksSeverity) {
  const Corpus c = generate_corpus(GeneratorSpec{});
  double err = 0;
  for (const Sample& s : c.samples) {
    for (std::size_t f = 0; f < kFeatureTypes; ++f) err += std::abs(s.observed[f] - s.severity[f]);
  }
  err /= static_cast<double>(c.samples.size() * kFeatureTypes);
  // Mean |N(0, 0.5 / sqrt(3))| is about 0.23.
  EXPECT_NEAR(err, 0.5 / std::sqrt(3.0) * std::sqrt(2 / 3.14159265358979), 0.02);
}

TEST(Corpus, PpmHeader) {
  const Corpus c = generate_corpus(small_spec());
  const auto path = std::filesystem::temp_directory_path() / "tandem_test.ppm";
  write_ppm(path, c.samples[0].image, 32);
  const auto bytes = read_file_bytes(path);
  const std::string header = "P6\n32 32\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 3 * 32 * 32);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())), header);
  // Interleaved RGB: pixel 0's green byte is channel 1's first byte.
  EXPECT_EQ(bytes[header.size() + 1], c.samples[0].image[32 * 32]);
  std::filesystem::remove(path);
}

TEST(KeyValues, ParseCommentsAndWhitespace) {
  const KeyValues kv = parse_key_values("# header\n a = 1 \nb=two # note\n\n");
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "two");
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);
}

TEST(KeyValues, BadLineNamesLine) {
  try {
    parse_key_values("a=1\nnonsense\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
}

TEST(KeyValues, TypedReadsAndUnknownKeys) {
  const KeyValues kv = parse_key_values("n=3\nr=0.25\nflag=true\ntypo=1\n");
  KeyValueReader r(kv);
  EXPECT_EQ(r.get_size("n", 0), 3u);
  EXPECT_EQ(r.get_real("r", 0), 0.25);
  EXPECT_TRUE(r.get_bool("flag", false));
  EXPECT_EQ(r.get_size("absent", 9), 9u);
  EXPECT_THROW(r.reject_unknown(), ConfigError);
  KeyValueReader bad(parse_key_values("n=abc\n"));
  EXPECT_THROW(bad.get_size("n", 0), ConfigError);
}

TEST(KeyValues, RealFormattingRoundTrips) {
  for (Real v : {0.1, 1e-4, 3.0, 5e-5, 0.9}) EXPECT_EQ(std::stod(format_real(v)), v);
}

}  // namespace
}  // namespace tandem
