#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "core/dual_attention.hpp"
#include "core/errors.hpp"
#include "core/grad_check.hpp"
#include "core/ops.hpp"
#include "core/prediction_head.hpp"
#include "test_util.hpp"

namespace tandem {
namespace {

using testing::random_tensor;

TEST(DualAttention, RequiresMatchingDims) {
  Rng rng(1);
  EXPECT_THROW(DualAttention(4, 4, 3, rng), ConfigError);
  EXPECT_THROW(DualAttention(4, 3, 4, rng), ConfigError);
  EXPECT_NO_THROW(DualAttention(4, 4, 4, rng));
}

TEST(DualAttention, ZeroEmbeddingWeightsGiveZeros) {
  Rng rng(2);
  DualAttention att(3, 3, 3, rng);
  att.embed_v_weight().value.fill(0);
  att.embed_s_weight().value.fill(0);
  Tape tape;
  auto p = att.bind(tape);
  auto [v, s] = DualAttention::embed_inputs(p, tape.constant(random_tensor({3, 4}, 3)), tape.constant(random_tensor({3, 2}, 4)));
  EXPECT_EQ(v.value().max_abs(), 0.0);
  EXPECT_EQ(s.value().max_abs(), 0.0);
}

TEST(DualAttention, IdentityEmbeddingIsTanh) {
  Rng rng(5);
  DualAttention att(3, 3, 3, rng);
  Tensor eye({3, 3}, 0.0);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1;
  att.embed_v_weight().value = eye;
  att.embed_s_weight().value = eye;
  const Tensor vr = random_tensor({3, 4}, 6, -2, 2), sr = random_tensor({3, 2}, 7, -2, 2);
  Tape tape;
  auto p = att.bind(tape);
  auto [v, s] = DualAttention::embed_inputs(p, tape.constant(vr), tape.constant(sr));
  for (std::size_t i = 0; i < vr.size(); ++i) EXPECT_DOUBLE_EQ(v.value()[i], std::tanh(vr[i]));
  for (std::size_t i = 0; i < sr.size(); ++i) EXPECT_DOUBLE_EQ(s.value()[i], std::tanh(sr[i]));
}

TEST(DualAttention, EmbedShapeMismatch) {
  Rng rng(8);
  DualAttention att(3, 3, 3, rng);
  Tape tape;
  auto p = att.bind(tape);
  EXPECT_THROW(DualAttention::embed_inputs(p, tape.constant(Tensor({4, 4}, 0.0)), tape.constant(Tensor({3, 2}, 0.0))),
               DimensionError);
  EXPECT_THROW(DualAttention::attend(p, tape.constant(Tensor({3, 4}, 0.0)), tape.constant(Tensor({2, 2}, 0.0))),
               DimensionError);
}

TEST(DualAttention, EmbedGradCheck) {
  Rng rng(9);
  DualAttention att(3, 3, 3, rng);
  ParameterList params{&att.embed_v_weight(), &att.embed_v_bias(), &att.embed_s_weight()};
  const Tensor vr = random_tensor({3, 4}, 10), sr = random_tensor({3, 2}, 11);
  const Tensor pv = random_tensor({3, 4}, 12), ps = random_tensor({3, 2}, 13);
  auto f = [&](Tape& tape) {
    auto p = att.bind(tape);
    auto [v, s] = DualAttention::embed_inputs(p, tape.constant(vr), tape.constant(sr));
    return add(sum(mul(v, tape.constant(pv))), sum(mul(s, tape.constant(ps))));
  };
  EXPECT_LT(grad_check_params(f, params).max_relative_error, 1e-4);
  auto rep = grad_check(
      [&](Tape& tape, std::span<const Var> in) {
        auto p = att.bind(tape);
        auto [v, s] = DualAttention::embed_inputs(p, in[0], in[1]);
        return add(sum(mul(v, tape.constant(pv))), sum(mul(s, tape.constant(ps))));
      },
      {vr, sr});
  EXPECT_LT(rep.max_relative_error, 1e-4);
}

TEST(DualAttention, SymmetricInputsGiveUniformAlpha) {
  Rng rng(14);
  DualAttention att(3, 3, 3, rng);
  // Same weights on both sides and identical constant columns make every
  // score equal.
  att.w_s().value = att.w_v().value;
  att.w_s_global().value = att.w_v_global().value;
  Tensor col = random_tensor({3}, 15);
  Tensor v({3, 4}), s({3, 2});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 4; ++c) v.at(r, c) = col[r];
    for (std::size_t c = 0; c < 2; ++c) s.at(r, c) = col[r];
  }
  Tape tape;
  auto res = DualAttention::attend(att.bind(tape), tape.constant(v), tape.constant(s));
  for (Real a : res.alpha.value().data()) EXPECT_NEAR(a, 1.0 / 6, 1e-15);
}

// Straight-line evaluation of the attention equations, written with scalar
// loops only, for G=2, N=1, M=C=D=2.
struct OracleOut {
  double alpha[3];
  double c[2];
};

OracleOut straight_line(const double V[2][2], const double S[2][1], const double Wv[2][2], const double Wvp[2][2],
                        const double Ws[2][2], const double Wsp[2][2], const double w[2], double b) {
  double dv[2], ds[2];
  for (int r = 0; r < 2; ++r) {
    dv[r] = (V[r][0] + V[r][1]) / 2;
    ds[r] = S[r][0];
  }
  double e[3];
  for (int col = 0; col < 2; ++col) {
    double score = b;
    for (int m = 0; m < 2; ++m) {
      double z = 0;
      for (int k = 0; k < 2; ++k) z += Wv[m][k] * V[k][col] + Wsp[m][k] * ds[k];
      score += w[m] * std::tanh(z);
    }
    e[col] = score;
  }
  {
    double score = b;
    for (int m = 0; m < 2; ++m) {
      double z = 0;
      for (int k = 0; k < 2; ++k) z += Ws[m][k] * S[k][0] + Wvp[m][k] * dv[k];
      score += w[m] * std::tanh(z);
    }
    e[2] = score;
  }
  const double mx = std::max({e[0], e[1], e[2]});
  double z = 0;
  OracleOut o{};
  for (int i = 0; i < 3; ++i) z += std::exp(e[i] - mx);
  for (int i = 0; i < 3; ++i) o.alpha[i] = std::exp(e[i] - mx) / z;
  for (int r = 0; r < 2; ++r) o.c[r] = o.alpha[0] * V[r][0] + o.alpha[1] * V[r][1] + o.alpha[2] * S[r][0];
  return o;
}

TEST(DualAttention, MatchesStraightLineOracle) {
  const double V[2][2] = {{0.3, -0.2}, {0.5, 0.1}};
  const double S[2][1] = {{-0.4}, {0.7}};
  const double Wv[2][2] = {{0.2, -0.1}, {0.4, 0.3}};
  const double Wvp[2][2] = {{-0.3, 0.2}, {0.1, 0.5}};
  const double Ws[2][2] = {{0.6, -0.2}, {-0.1, 0.3}};
  const double Wsp[2][2] = {{0.15, 0.25}, {-0.35, 0.05}};
  const double w[2] = {0.9, -0.6};
  const double b = 0.12;
  const auto expected = straight_line(V, S, Wv, Wvp, Ws, Wsp, w, b);

  Rng rng(16);
  DualAttention att(2, 2, 2, rng);
  att.w_v().value = Tensor::matrix({{0.2, -0.1}, {0.4, 0.3}});
  att.w_v_global().value = Tensor::matrix({{-0.3, 0.2}, {0.1, 0.5}});
  att.w_s().value = Tensor::matrix({{0.6, -0.2}, {-0.1, 0.3}});
  att.w_s_global().value = Tensor::matrix({{0.15, 0.25}, {-0.35, 0.05}});
  att.w().value = Tensor::matrix({{0.9, -0.6}});
  att.b().value = Tensor::vector({0.12});
  Tape tape;
  auto res = DualAttention::attend(att.bind(tape), tape.constant(Tensor::matrix({{0.3, -0.2}, {0.5, 0.1}})),
                                   tape.constant(Tensor::matrix({{-0.4}, {0.7}})));
  ASSERT_EQ(res.alpha.shape(), (Shape{3}));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(res.alpha.value()[i], expected.alpha[i], 1e-10);
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(res.context.value()[i], expected.c[i], 1e-10);
}

TEST(DualAttention, FullScaleShapes) {
  Rng rng(17);
  DualAttention att(256, 256, 256, rng);
  Tape tape;
  auto res = DualAttention::attend(att.bind(tape), tape.constant(random_tensor({256, 196}, 18)),
                                   tape.constant(random_tensor({256, 5}, 19)));
  EXPECT_EQ(res.alpha.shape(), (Shape{201}));
  EXPECT_EQ(res.context.shape(), (Shape{256}));
  EXPECT_EQ(res.z_sv.shape(), (Shape{256, 196}));
  EXPECT_EQ(res.z_vs.shape(), (Shape{256, 5}));
}

TEST(DualAttention, NormalizationAndContextIdentityOver100Seeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    DualAttention att(4, 4, 4, rng);
    const Tensor v = random_tensor({4, 6}, rng, -3, 3), s = random_tensor({4, 3}, rng, -3, 3);
    Tape tape;
    auto res = DualAttention::attend(att.bind(tape), tape.constant(v), tape.constant(s));
    const Tensor& a = res.alpha.value();
    EXPECT_NEAR(a.sum(), 1.0, 1e-6);
    for (Real x : a.data()) EXPECT_GE(x, 0.0);
    for (std::size_t r = 0; r < 4; ++r) {
      Real c = 0;
      for (std::size_t j = 0; j < 6; ++j) c += v.at(r, j) * a[j];
      for (std::size_t j = 0; j < 3; ++j) c += s.at(r, j) * a[6 + j];
      EXPECT_LT(std::abs(c - res.context.value()[r]), 1e-9);
    }
  }
}

TEST(DualAttention, ScalarBiasIsNoOp) {
  Rng rng(20);
  DualAttention att(4, 4, 4, rng);
  PredictionHead head(4, 4, rng);
  const Tensor v = random_tensor({4, 6}, 21), s = random_tensor({4, 3}, 22);
  auto run = [&](Real bias) {
    att.b().value = Tensor::vector({bias});
    Tape tape;
    auto res = DualAttention::attend(att.bind(tape), tape.constant(v), tape.constant(s));
    Var logits = PredictionHead::logits(head.bind(tape), res.context, tape.constant(v));
    return std::tuple{res.alpha.value(), res.context.value(), make_prediction(logits.value())};
  };
  const auto [a0, c0, p0] = run(0.0);
  const auto [a1, c1, p1] = run(7.5);
  EXPECT_LT(max_abs_diff(a0, a1), 1e-9);
  EXPECT_LT(max_abs_diff(c0, c1), 1e-9);
  EXPECT_LT(max_abs_diff(p0.probabilities, p1.probabilities), 1e-9);
  EXPECT_EQ(p0.predicted_class, p1.predicted_class);
}

TEST(DualAttention, SentencePerturbationMovesImageWeights) {
  Rng rng(23);
  DualAttention att(4, 4, 4, rng);
  const Tensor v = random_tensor({4, 6}, 24);
  Tensor s = random_tensor({4, 3}, 25);
  Tape tape;
  auto p = att.bind(tape);
  const Tensor a0 = DualAttention::attend(p, tape.constant(v), tape.constant(s)).alpha.value();
  s.at(0, 1) += 0.5;
  s.at(2, 1) -= 0.3;
  const Tensor a1 = DualAttention::attend(p, tape.constant(v), tape.constant(s)).alpha.value();
  Real moved = 0;
  for (std::size_t i = 0; i < 6; ++i) moved = std::max(moved, std::abs(a0[i] - a1[i]));
  EXPECT_GT(moved, 0.0);
}

TEST(DualAttention, ImageOnlyMatchesZeroText) {
  Rng rng(26);
  DualAttention att(4, 4, 4, rng);
  const Tensor v = random_tensor({4, 6}, 27);
  Tape tape;
  auto p = att.bind(tape);
  auto only = DualAttention::attend_image_only(p, tape.constant(v), 3);
  auto zero = DualAttention::attend(p, tape.constant(v), tape.constant(Tensor({4, 3}, 0.0)));
  EXPECT_EQ(only.alpha.value(), zero.alpha.value());
  EXPECT_EQ(only.context.value(), zero.context.value());
  EXPECT_EQ(only.alpha.shape(), (Shape{9}));
  EXPECT_NEAR(only.alpha.value().sum(), 1.0, 1e-6);
  // With S = 0 the pooled-text term vanishes: z_sv = tanh(W_v V).
  const Tensor& wv = att.w_v().value;
  for (std::size_t m = 0; m < 4; ++m) {
    for (std::size_t g = 0; g < 6; ++g) {
      Real z = 0;
      for (std::size_t k = 0; k < 4; ++k) z += wv.at(m, k) * v.at(k, g);
      EXPECT_NEAR(only.z_sv.value().at(m, g), std::tanh(z), 1e-15);
    }
  }
}

TEST(DualAttention, FullGradCheck) {
  Rng rng(28);
  DualAttention att(3, 3, 3, rng);
  ParameterList params;
  att.collect(params);
  const Tensor vr = random_tensor({3, 4}, 29), sr = random_tensor({3, 2}, 30), proj = random_tensor({3}, 31);
  auto loss = [&](Tape& tape, const Var& v_raw, const Var& s_raw) {
    auto p = att.bind(tape);
    auto [v, s] = DualAttention::embed_inputs(p, v_raw, s_raw);
    auto res = DualAttention::attend(p, v, s);
    return add(sum(mul(res.context, tape.constant(proj))), sum(mul(res.alpha, res.alpha)));
  };
  EXPECT_LT(grad_check_params([&](Tape& t) { return loss(t, t.constant(vr), t.constant(sr)); }, params)
                .max_relative_error,
            1e-4);
  EXPECT_LT(grad_check([&](Tape& t, std::span<const Var> in) { return loss(t, in[0], in[1]); }, {vr, sr})
                .max_relative_error,
            1e-4);
}

// ---- prediction head and modality policy ----

TEST(ModalityPolicy, RejectsOutOfRangeRate) {
  Rng rng(1);
  Tape tape;
  Var s = tape.constant(Tensor({2, 2}, 1.0));
  for (Real r : {-0.1, 1.0, 1.5}) {
    ModalityPolicy p{r, Mode::kTrain, true};
    EXPECT_THROW(apply_modality_policy(s, p, rng), ConfigError);
  }
}

TEST(ModalityPolicy, ZeroRateTrainPassesThrough) {
  Rng rng(2);
  Tape tape;
  Var s = tape.constant(random_tensor({3, 5}, 3));
  for (int i = 0; i < 1000; ++i) {
    EXPECT_EQ(apply_modality_policy(s, {0.0, Mode::kTrain, true}, rng).value(), s.value());
  }
}

TEST(ModalityPolicy, EvalHalvesOrZeroes) {
  Rng rng(4);
  Tape tape;
  const Tensor x = random_tensor({3, 5}, 5);
  Var s = tape.constant(x);
  const Tensor half = apply_modality_policy(s, {0.5, Mode::kEval, true}, rng).value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(half[i], x[i] / 2);
  EXPECT_EQ(apply_modality_policy(s, {0.5, Mode::kEval, false}, rng).value().max_abs(), 0.0);
}

TEST(ModalityPolicy, MonteCarloDropFraction) {
  Rng rng(6);
  ModalityPolicy p{0.5, Mode::kTrain, true};
  std::size_t dropped = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) dropped += decide_modality(p, rng).keep ? 0 : 1;
  const double frac = static_cast<double>(dropped) / n;
  EXPECT_GE(frac, 0.48);
  EXPECT_LE(frac, 0.52);
}

TEST(PredictionHead, ProbabilitiesAndArgmax) {
  Rng rng(7);
  PredictionHead head(4, 4, rng);
  Tape tape;
  Var logits = PredictionHead::logits(head.bind(tape), tape.constant(random_tensor({4}, 8)),
                                      tape.constant(random_tensor({4, 6}, 9)));
  auto pred = make_prediction(logits.value());
  EXPECT_EQ(pred.probabilities.shape(), (Shape{4}));
  EXPECT_NEAR(pred.probabilities.sum(), 1.0, 1e-6);
  for (Real p : pred.probabilities.data()) EXPECT_GT(p, 0.0);
  std::size_t arg = 0;
  for (std::size_t i = 1; i < 4; ++i)
    if (logits.value()[i] > logits.value()[arg]) arg = i;
  EXPECT_EQ(pred.predicted_class, arg);
}

TEST(PredictionHead, ZeroContextUsesPooledFeaturesOnly) {
  Rng rng(10);
  PredictionHead head(4, 4, rng);
  const Tensor v = random_tensor({4, 6}, 11);
  Tape tape;
  auto p = head.bind(tape);
  Var with_zero = PredictionHead::logits(p, tape.constant(Tensor({4}, 0.0)), tape.constant(v));
  Var pooled_only = PredictionHead::logits(p, Var(), tape.constant(v));
  EXPECT_EQ(with_zero.value(), pooled_only.value());
  // Reference: tanh(W1 mean(V) + b1) -> W2 . + b2.
  Tensor pooled({4}, 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t g = 0; g < 6; ++g) pooled[r] += v.at(r, g) / 6;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    Real out = head.out_bias().value[k];
    for (std::size_t j = 0; j < 4; ++j) {
      Real h = head.hidden_bias().value[j];
      for (std::size_t i = 0; i < 4; ++i) h += head.hidden_weight().value.at(j, i) * pooled[i];
      out += head.out_weight().value.at(k, j) * std::tanh(h);
    }
    EXPECT_NEAR(with_zero.value()[k], out, 1e-14);
  }
}

TEST(PredictionHead, ContextWidthMismatch) {
  Rng rng(12);
  PredictionHead head(4, 4, rng);
  Tape tape;
  EXPECT_THROW(PredictionHead::logits(head.bind(tape), tape.constant(Tensor({3}, 0.0)), tape.constant(Tensor({4, 2}, 0.0))),
               DimensionError);
}

TEST(PredictionHead, GradCheck) {
  Rng rng(13);
  PredictionHead head(3, 4, rng);
  ParameterList params;
  head.collect(params);
  const Tensor c = random_tensor({3}, 14), v = random_tensor({3, 4}, 15);
  EXPECT_LT(grad_check_params(
                [&](Tape& t) { return cross_entropy(PredictionHead::logits(head.bind(t), t.constant(c), t.constant(v)), 2); },
                params)
                .max_relative_error,
            1e-4);
}

}  // namespace
}  // namespace tandem
