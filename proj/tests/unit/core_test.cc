#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "delta/core.h"
#include "delta/error.h"
#include "support/expect_error.h"

namespace delta {
namespace {

using testing::expect_error;

TEST(CombineLogits, DirectArithmetic) {
  const auto out = combine_logits(LogitVector({1, 0}), LogitVector({2, 0}), LogitVector({1, 0}), 1.0);
  EXPECT_EQ(out.values(), (std::vector<double>{2, 0}));
}

TEST(CombineLogits, ZeroDeltaIsIdentity) {
  const LogitVector base({3, -1, 0.5});
  const LogitVector expert({7.25, 1e3, -2});
  EXPECT_EQ(combine_logits(base, expert, expert, 1.0), base);
}

TEST(CombineLogits, LambdaScales) {
  const auto out = combine_logits(LogitVector({0, 0}), LogitVector({1, -1}), LogitVector({0, 0}), 0.5);
  EXPECT_EQ(out.values(), (std::vector<double>{0.5, -0.5}));
}

TEST(CombineLogits, LambdaZeroReturnsBaseExactly) {
  const LogitVector base({0.1, 0.2, 0.3});
  EXPECT_EQ(combine_logits(base, LogitVector({1e300, 0, 0}), LogitVector({-1e300, 0, 0}), 0.0), base);
}

TEST(CombineLogits, DeltaOverloadAgrees) {
  const LogitVector base({1, 2, 3});
  const LogitVector e({0.5, 0.25, 4});
  const LogitVector eb({1, 1, 1});
  EXPECT_EQ(combine_logits(base, e, eb, 0.7), combine_logits(base, delta_logits(e, eb), 0.7));
}

TEST(CombineLogits, LengthMismatch) {
  expect_error(ErrorCode::kVocabMismatch, [] {
    combine_logits(LogitVector({1, 2}), LogitVector({1, 2, 3}), LogitVector({1, 2}), 1.0);
  });
}

TEST(LogitVector, RejectsNonFinite) {
  expect_error(ErrorCode::kInvalidLogits, [] { LogitVector({1.0, std::nan("")}); });
  expect_error(ErrorCode::kInvalidLogits, [] { LogitVector({INFINITY}); });
}

TEST(DeltaLogits, NormAndDot) {
  const DeltaLogits d({3, 4});
  EXPECT_DOUBLE_EQ(d.l2_norm(), 5.0);
  const std::vector<double> other{1, 2};
  EXPECT_DOUBLE_EQ(d.dot(other), 11.0);
}

TEST(Softmax, Symmetric) {
  const auto d = softmax_with_temperature(LogitVector({0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(d[0], 0.5);
  EXPECT_DOUBLE_EQ(d[1], 0.5);
}

TEST(Softmax, Analytic) {
  const auto d = softmax_with_temperature(LogitVector({std::log(2.0), 0}), 1.0);
  EXPECT_NEAR(d[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(d[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(17);
    for (auto& x : a) x = u(rng);
    const double c = u(rng) * 10;
    std::vector<double> b = a;
    for (auto& x : b) x += c;
    const auto pa = softmax_with_temperature(LogitVector(a), 0.7);
    const auto pb = softmax_with_temperature(LogitVector(b), 0.7);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-12);
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const auto d = softmax_with_temperature(LogitVector({1e308, 1e308 - 1e292, -1e308}), 1.0);
  double sum = 0.0;
  for (double p : d.probs()) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  expect_error(ErrorCode::kInvalidConfig, [] { softmax_with_temperature(LogitVector({1, 2}), 0.0); });
  expect_error(ErrorCode::kInvalidConfig, [] { softmax_with_temperature(LogitVector({1, 2}), -1.0); });
}

TEST(Nucleus, KeepsBoundaryToken) {
  const auto d = nucleus_filter(Distribution({0.5, 0.3, 0.2}), 0.7);
  EXPECT_NEAR(d[0], 0.625, 1e-15);
  EXPECT_NEAR(d[1], 0.375, 1e-15);
  EXPECT_EQ(d[2], 0.0);
}

TEST(Nucleus, FullMassUnchanged) {
  const Distribution in({0.1, 0.6, 0.3});
  const auto out = nucleus_filter(in, 1.0);
  for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(out[i], in[i]);
}

TEST(Nucleus, SingleTokenExceedsThreshold) {
  const auto d = nucleus_filter(Distribution({0.9, 0.1}), 0.5);
  EXPECT_EQ(d[0], 1.0);
  EXPECT_EQ(d[1], 0.0);
}

TEST(Nucleus, TiesKeepLowerId) {
  const auto d = nucleus_filter(Distribution({0.25, 0.25, 0.25, 0.25}), 0.5);
  EXPECT_EQ(d.support(), (std::vector<TokenId>{0, 1}));
}

TEST(Argmax, Basic) {
  EXPECT_EQ(argmax_token(LogitVector({1, 3, 2})), 1);
  EXPECT_EQ(argmax_token(LogitVector({5, 5, 0})), 0);
}

TEST(Argmax, InvariantUnderSoftmax) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> v(9);
    for (auto& x : v) x = u(rng);
    const LogitVector logits(v);
    for (double tau : {0.1, 0.7, 1.0, 3.0}) {
      const auto d = softmax_with_temperature(logits, tau);
      EXPECT_EQ(argmax_token(logits), argmax_token(d.probs()));
    }
  }
}

TEST(Sample, PointMass) {
  auto rng = RandomStream::keyed(1, {2});
  const Distribution d({1.0, 0.0, 0.0});
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample_token(d, rng), 0);
}

TEST(Sample, FairCoin) {
  auto rng = RandomStream::keyed(2024, {});
  const Distribution d({0.5, 0.5});
  int zeros = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) zeros += sample_token(d, rng) == 0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.5, 0.01);
}

TEST(Sample, NeverPicksZeroProbability) {
  auto rng = RandomStream::keyed(3, {});
  const Distribution d({0.0, 0.3, 0.0, 0.7, 0.0});
  for (int i = 0; i < 10000; ++i) {
    const auto t = sample_token(d, rng);
    EXPECT_TRUE(t == 1 || t == 3);
  }
}

TEST(Sample, Deterministic) {
  const Distribution d({0.2, 0.3, 0.5});
  auto a = RandomStream::keyed(77, {1, 2});
  auto b = RandomStream::keyed(77, {1, 2});
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_token(d, a), sample_token(d, b));
}

TEST(Distribution, RejectsDegenerate) {
  expect_error(ErrorCode::kInvalidDistribution, [] { Distribution({0.0, 0.0}); });
  expect_error(ErrorCode::kInvalidDistribution, [] { Distribution({0.7, 0.7}); });
  expect_error(ErrorCode::kInvalidDistribution, [] { Distribution({1.5, -0.5}); });
}

TEST(Kl, ZeroForIdentical) {
  const Distribution p({0.2, 0.3, 0.5});
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(Kl, KnownValue) {
  const Distribution p({0.5, 0.5});
  const Distribution q({0.25, 0.75});
  EXPECT_NEAR(kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
}

TEST(Kl, FloorWhenSupportDiffers) {
  const Distribution p({0.5, 0.5});
  const Distribution q({1.0, 0.0});
  const double kl = kl_divergence(p, q);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 10.0);
}

TEST(DecodeConfig, Validation) {
  DecodeConfig c;
  EXPECT_NO_THROW(c.validate());
  c.top_p = 0.0;
  expect_error(ErrorCode::kInvalidConfig, [&] { c.validate(); });
  c = {};
  c.lambda = -1;
  expect_error(ErrorCode::kInvalidConfig, [&] { c.validate(); });
  c = {};
  c.max_tokens = 0;
  expect_error(ErrorCode::kInvalidConfig, [&] { c.validate(); });
  c = {};
  c.temperature = 0;
  expect_error(ErrorCode::kInvalidConfig, [&] { c.validate(); });
}

TEST(RandomStream, KeyedStreamsDiffer) {
  auto a = RandomStream::keyed(1, {0});
  auto b = RandomStream::keyed(1, {1});
  auto c = RandomStream::keyed(2, {0});
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(RandomStream, UnitAndBelowRanges) {
  RandomStream r(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.next_unit();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.next_below(7), 7u);
  }
}

}  // namespace
}  // namespace delta
