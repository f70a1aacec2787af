#include <cmath>

#include <gtest/gtest.h>

#include "delta/metrics.h"
#include "support/expect_error.h"
#include "support/temp_dir.h"

namespace delta {
namespace {

using testing::expect_error;

TEST(Extract, Boxed) {
  EXPECT_EQ(extract_answer("so \\boxed{42} done", AnswerStyle::kBoxed), "42");
  EXPECT_EQ(extract_answer("\\boxed{\\frac{1}{2}} ... \\boxed{3}", AnswerStyle::kBoxed), "3");
  EXPECT_EQ(extract_answer("\\boxed{\\frac{1}{2}}", AnswerStyle::kBoxed), "\\frac{1}{2}");
  EXPECT_FALSE(extract_answer("no box here", AnswerStyle::kBoxed).has_value());
  EXPECT_FALSE(extract_answer("\\boxed{unbalanced", AnswerStyle::kBoxed).has_value());
}

TEST(Extract, LastNumber) {
  EXPECT_EQ(extract_answer("answer is 1,024.", AnswerStyle::kLastNumber), "1024");
  EXPECT_EQ(extract_answer("from 3 to -2.5 then", AnswerStyle::kLastNumber), "-2.5");
  EXPECT_FALSE(extract_answer("none", AnswerStyle::kLastNumber).has_value());
}

TEST(Match, Rules) {
  EXPECT_TRUE(answers_match("0.5", "1/2"));
  EXPECT_TRUE(answers_match(" X ", "x"));
  EXPECT_FALSE(answers_match("12", "21"));
  EXPECT_TRUE(answers_match("\\frac{3}{4}", "0.75"));
  EXPECT_TRUE(answers_match("$7$", "7"));
  EXPECT_TRUE(answers_match("1,000", "1000"));
  EXPECT_EQ(parse_rational("\\dfrac{1}{4}"), 0.25);
  EXPECT_FALSE(parse_rational("x+1").has_value());
}

EvalRecord rec(std::vector<std::string> preds, std::string truth = "a") {
  return EvalRecord::make("p", std::move(truth), std::move(preds));
}

TEST(PassAtK, Exact) {
  EXPECT_DOUBLE_EQ(pass_at_k_exact(4, 2, 2), 5.0 / 6.0);
  for (int k = 1; k <= 5; ++k) {
    EXPECT_EQ(pass_at_k_exact(5, 0, k), 0.0);
    EXPECT_EQ(pass_at_k_exact(5, 5, k), 1.0);
  }
  EXPECT_EQ(pass_at_k_exact(6, 1, 6), 1.0);
  EXPECT_EQ(pass_at_k_exact(6, 0, 6), 0.0);
  EXPECT_DOUBLE_EQ(pass_at_k_exact(4, 1, 1), 0.25);
}

TEST(PassAtK, ExactOverRecords) {
  const std::vector<EvalRecord> rs{rec({"a", "b", "a", "c"}), rec({"b", "b", "b", "b"})};
  const auto r = pass_at_k_exact(rs, 2);
  EXPECT_DOUBLE_EQ(r.value, (5.0 / 6.0 + 0.0) / 2.0);
  EXPECT_EQ(r.estimator, Estimator::kExact);
}

TEST(PassAtK, InvalidK) {
  const std::vector<EvalRecord> rs{rec({"a", "b"})};
  expect_error(ErrorCode::kInvalidK, [&] { pass_at_k_exact(rs, 3); });
  expect_error(ErrorCode::kInvalidK, [&] { pass_at_k_exact(rs, 0); });
  expect_error(ErrorCode::kInvalidK, [&] { pass_at_k_resampled(rs, 3, 10, 0); });
  expect_error(ErrorCode::kInvalidK, [&] { majority_at_k(rs, 3, 10, 0); });
  expect_error(ErrorCode::kEmptyInput, [&] { pass_at_k_exact(std::vector<EvalRecord>{}, 1); });
}

TEST(PassAtK, ResampledMatchesOracle) {
  const std::vector<EvalRecord> rs{rec({"a", "b", "a", "c"})};
  const auto r = pass_at_k_resampled(rs, 2, 10000, 12345);
  ASSERT_TRUE(r.stderr_value.has_value());
  EXPECT_LE(std::abs(r.value - 5.0 / 6.0), 3 * *r.stderr_value);
  EXPECT_EQ(r.repeats, 10000);
}

TEST(PassAtK, ResampledWholePoolIsExact) {
  const std::vector<EvalRecord> rs{rec({"a", "b", "a"}), rec({"c", "b", "d"})};
  EXPECT_EQ(pass_at_k_resampled(rs, 3, 50, 1).value, pass_at_k_exact(rs, 3).value);
  const std::vector<EvalRecord> all{rec({"a", "a"}), rec({"a", "a"})};
  for (int k = 1; k <= 2; ++k) EXPECT_EQ(pass_at_k_resampled(all, k, 100, 9).value, 1.0);
}

TEST(PassAtK, ResampledDeterministic) {
  const std::vector<EvalRecord> rs{rec({"a", "b", "a", "c", "d"}), rec({"b", "a", "c", "c", "c"})};
  EXPECT_EQ(pass_at_k_resampled(rs, 2, 500, 3).value, pass_at_k_resampled(rs, 2, 500, 3).value);
}

TEST(Majority, Rules) {
  EXPECT_EQ(majority_at_k(std::vector<EvalRecord>{rec({"a", "a", "b"})}, 3, 10, 0).value, 1.0);
  EXPECT_EQ(majority_at_k(std::vector<EvalRecord>{rec({"a", "b"})}, 2, 10, 0).value, 1.0);
  EXPECT_EQ(majority_at_k(std::vector<EvalRecord>{rec({"b", "a"})}, 2, 10, 0).value, 0.0);
  // Equivalent numerals vote together.
  EXPECT_EQ(majority_at_k(std::vector<EvalRecord>{rec({"b", "0.5", "1/2"}, "0.5")}, 3, 10, 0).value,
            1.0);
  // Empty predictions do not vote.
  EXPECT_EQ(majority_at_k(std::vector<EvalRecord>{rec({"", "", "a"})}, 3, 10, 0).value, 1.0);
}

TEST(Majority, KOneIsPassAtOne) {
  const std::vector<EvalRecord> rs{rec({"a", "b", "c", "a"}), rec({"b", "b", "a", "c"})};
  const auto m = majority_at_k(rs, 1, 20000, 4);
  EXPECT_NEAR(m.value, pass_at_k_exact(rs, 1).value, 4 * *m.stderr_value);
}

TEST(Recovery, PublishedExamples) {
  EXPECT_NEAR(100 * recovery_rate(80.7, 68.6, 81.3), 95.3, 0.05);
  EXPECT_NEAR(100 * recovery_rate(34.2, 21.0, 33.6), 104.8, 0.05);
  EXPECT_EQ(recovery_rate(50, 50, 60), 0.0);
  EXPECT_EQ(recovery_rate(60, 50, 60), 1.0);
  expect_error(ErrorCode::kDegenerateGap, [] { recovery_rate(1, 2, 2); });
}

TEST(Records, RoundTrip) {
  testing::TempDir dir;
  const std::vector<EvalRecord> rs{EvalRecord::make("p0", "1/2", {"0.5", "", "3"}),
                                   EvalRecord::make("p1", "x", {"x"})};
  save_eval_records(dir / "r.jsonl", rs);
  const auto back = load_eval_records(dir / "r.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].predictions, rs[0].predictions);
  EXPECT_EQ(back[0].correct, (std::vector<bool>{true, false, false}));
  EXPECT_EQ(back[1].num_correct(), 1u);
}

TEST(Records, MalformedLineNamed) {
  testing::TempDir dir;
  testing::write_text(dir / "r.jsonl",
                      "{\"problem_id\":\"a\",\"ground_truth\":\"1\",\"predictions\":[\"1\"]}\n{oops\n");
  expect_error(ErrorCode::kIngestion, [&] { load_eval_records(dir / "r.jsonl"); }, ":2");
}

}  // namespace
}  // namespace delta
