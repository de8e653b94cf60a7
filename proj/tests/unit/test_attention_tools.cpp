#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "core/attention_tools.hpp"
#include "core/binary_io.hpp"
#include "core/errors.hpp"
#include "small_model.hpp"

namespace tandem {
namespace {

using testing::small_corpus_spec;
using testing::small_model_config;

TEST(Upsample, CheckerboardMatchesHandValues) {
  const Tensor board({2, 2}, std::vector<Real>{1, 0, 0, 1});
  const Tensor up = upsample_bilinear(board, 4);
  // v(x, y) = 1 - x - y + 2xy at x, y in {0, 1/3, 2/3, 1}.
  const Real expect[4][4] = {{1, 2.0 / 3, 1.0 / 3, 0},
                             {2.0 / 3, 5.0 / 9, 4.0 / 9, 1.0 / 3},
                             {1.0 / 3, 4.0 / 9, 5.0 / 9, 2.0 / 3},
                             {0, 1.0 / 3, 2.0 / 3, 1}};
  for (std::size_t y = 0; y < 4; ++y) {
    for (std::size_t x = 0; x < 4; ++x) EXPECT_DOUBLE_EQ(up.at(y, x), expect[y][x]) << y << "," << x;
  }
}

TEST(Upsample, SameSizeIsIdentity) {
  const Tensor g({3, 3}, std::vector<Real>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor up = upsample_bilinear(g, 3);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(up[i], g[i]);
}

TEST(Upsample, RejectsBadInput) {
  EXPECT_THROW(upsample_bilinear(Tensor({4}, 0.0), 8), DimensionError);
  EXPECT_THROW(upsample_bilinear(Tensor({2, 2}, 0.0), 0), DimensionError);
}

TEST(AttentionMap, SingleHotLocalizesToCorner) {
  const std::size_t g = 4;
  for (std::size_t corner : {std::size_t{0}, g - 1, g * (g - 1), g * g - 1}) {
    std::vector<Real> alpha(g * g + 5, 0.0);
    alpha[corner] = 1;
    const AttentionMap map = export_attention_map(alpha, g, 32);
    const auto peak = std::max_element(map.pixels.begin(), map.pixels.end()) - map.pixels.begin();
    const std::size_t py = static_cast<std::size_t>(peak) / 32, px = static_cast<std::size_t>(peak) % 32;
    EXPECT_EQ(py, corner / g == 0 ? 0u : 31u) << corner;
    EXPECT_EQ(px, corner % g == 0 ? 0u : 31u) << corner;
    EXPECT_EQ(map.pixels[static_cast<std::size_t>(peak)], 255);
  }
}

TEST(AttentionMap, FlatMapIsGray) {
  std::vector<Real> alpha(16 + 5, 1.0 / 21);
  const AttentionMap map = export_attention_map(alpha, 4, 8);
  for (auto p : map.pixels) EXPECT_EQ(p, 128);
}

TEST(AttentionMap, ShortAlphaIsDimensionError) {
  std::vector<Real> alpha(10, 0.1);
  EXPECT_THROW(export_attention_map(alpha, 4, 8), DimensionError);
  EXPECT_THROW(attention_csv(alpha, 4), DimensionError);
}

TEST(AttentionMap, PgmAndCsvLayout) {
  std::vector<Real> alpha(4 + 2, 0.0);
  alpha[1] = 0.5;
  alpha[4] = 0.5;
  const AttentionMap map = export_attention_map(alpha, 2, 3);
  const auto path = std::filesystem::temp_directory_path() / "tandem_test.pgm";
  write_pgm(path, map);
  const auto bytes = read_file_bytes(path);
  std::filesystem::remove(path);
  const std::string header = "P5\n3 3\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 9);
  EXPECT_EQ(bytes[header.size() + 2], 255);  // top-right is the hot cell

  const std::string csv = attention_csv(alpha, 2);
  EXPECT_EQ(csv.rfind("index,kind,label,weight\n", 0), 0u);
  EXPECT_NE(csv.find("1,region,1,0.5\n"), std::string::npos);
  EXPECT_NE(csv.find("4,sentence,0,0.5\n"), std::string::npos);
  EXPECT_NE(csv.find("5,sentence,1,0\n"), std::string::npos);
}

TEST(TextAttentionStats, UniformScoresGiveUniformTable) {
  const Corpus c = generate_corpus(small_corpus_spec());
  TandemModel model(small_model_config(), c.vocab, 1);
  ParameterList att;
  model.attention().collect(att);
  for (Parameter* p : att) {
    if (p->name == "attention/w") p->value.fill(0);
  }
  std::vector<std::size_t> idx(c.samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const TextAttentionStats st = text_attention_stats(model, c, idx);
  ASSERT_EQ(st.table.shape(), (Shape{4, 6}));
  EXPECT_TRUE(st.warnings.empty());
  for (Real v : st.table.data()) EXPECT_NEAR(v, 1.0 / 21, 1e-12);
}

TEST(TextAttentionStats, EmptyClassIsNaNWithWarning) {
  const Corpus c = generate_corpus(small_corpus_spec());
  TandemModel model(small_model_config(), c.vocab, 1);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    if (c.samples[i].label != kInsufficient) idx.push_back(i);
  }
  const TextAttentionStats st = text_attention_stats(model, c, idx);
  ASSERT_EQ(st.warnings.size(), 1u);
  for (std::size_t j = 0; j < 6; ++j) EXPECT_TRUE(std::isnan(st.table.at(kInsufficient, j)));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_FALSE(std::isnan(st.table.at(kNormal, j)));
  Real mean = 0;
  for (std::size_t j = 0; j < 5; ++j) mean += st.table.at(kNormal, j) / 5;
  EXPECT_NEAR(st.table.at(kNormal, 5), mean, 1e-15);
  const std::string csv = text_attention_csv(st);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "class,pleomorphism,crowding,polarity,mitosis,nucleoli,overall");
}

TEST(TextAttentionStats, ImageOnlyModelRejected) {
  const Corpus c = generate_corpus(small_corpus_spec(2, 2));
  ModelConfig m = small_model_config();
  m.kind = ModelKind::kImageOnly;
  TandemModel model(m, c.vocab, 1);
  EXPECT_THROW(sample_attention(model, c.samples[0], true), ConfigError);
}

}  // namespace
}  // namespace tandem
