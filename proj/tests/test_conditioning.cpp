#include "acdiff/conditioning.hpp"
#include "acdiff/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace acdiff;

namespace {

ConditioningParams make_params(int d_emb = 8, std::uint64_t seed = 1) {
  Rng rng(seed);
  return ConditioningParams::init(ConditioningConfig{5, d_emb, 16, 32}, rng);
}

ConditionImage uniform_histogram_image() {
  // 64 pixels, two per bin, centred in each of the 32 bins.
  std::vector<double> px;
  for (int b = 0; b < 32; ++b) {
    px.push_back((b + 0.5) / 32.0);
    px.push_back((b + 0.25) / 32.0);
  }
  return ConditionImage(8, 8, px);
}

double silu_ref(double x) { return x / (1.0 + std::exp(-x)); }

}  // namespace

TEST(EncodePrompt, DeterministicAndDistinct) {
  const auto p = make_params();
  const auto a = encode_prompt(PromptInput{3, "cat"}, p);
  const auto b = encode_prompt(PromptInput{3, "cat"}, p);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.source, EmbeddingSource::prompt);
  EXPECT_NE(encode_prompt(PromptInput{2, ""}, p).values, a.values);
}

TEST(EncodePrompt, ZeroTableGivesZeroVector) {
  auto p = make_params();
  p.prompt_table.value().setZero();
  EXPECT_TRUE(encode_prompt(PromptInput{0, ""}, p).values.isZero(0.0));
}

TEST(EncodePrompt, RejectsOutOfRangeClass) {
  const auto p = make_params();
  EXPECT_THROW(encode_prompt(PromptInput{5, ""}, p), ContractError);
  EXPECT_THROW(encode_prompt(PromptInput{-1, ""}, p), ContractError);
}

TEST(EncodeCondition, BlankImageZeroBiasGivesZero) {
  const auto p = make_params();
  const auto e = encode_condition(ConditionImage(16, 16, 0.0), p);
  EXPECT_TRUE(e.values.isZero(0.0));
  EXPECT_EQ(e.source, EmbeddingSource::condition);
}

TEST(EncodeCondition, EightByEightPoolingIsIdentity) {
  auto p = make_params(2);
  Matrix w = Matrix::Zero(64, 2);
  w(0, 0) = 0.5;
  w(9, 0) = -1.0;
  w(63, 1) = 2.0;
  p.cond_w.value() = w;
  p.cond_b.value() << 0.1, -0.2;
  std::vector<double> px(64, 0.0);
  px[0] = 0.4;
  px[9] = 0.8;
  px[63] = 0.3;
  const auto e = encode_condition(ConditionImage(8, 8, px), p);
  EXPECT_DOUBLE_EQ(e.values(0), silu_ref(0.5 * 0.4 - 0.8 + 0.1));
  EXPECT_DOUBLE_EQ(e.values(1), silu_ref(2.0 * 0.3 - 0.2));
  EXPECT_EQ(pool_condition(ConditionImage(8, 8, px)), Eigen::Map<const RowVector>(px.data(), 64));
}

TEST(EncodeCondition, PoolingAveragesBlocks) {
  std::vector<double> px(16 * 16, 0.0);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) px[static_cast<std::size_t>(y * 16 + x)] = (x + y) / 2.0;
  const RowVector pooled = pool_condition(ConditionImage(16, 16, px));
  EXPECT_DOUBLE_EQ(pooled(0), 0.5);
  EXPECT_DOUBLE_EQ(pooled.tail(63).sum(), 0.0);
}

TEST(EncodeCondition, RejectsEmptyImage) {
  const auto p = make_params();
  EXPECT_THROW(encode_condition(ConditionImage{}, p), ContractError);
  EXPECT_THROW(ConditionImage(0, 4, 0.0), ContractError);
  EXPECT_THROW(ConditionImage(2, 2, std::vector<double>{0, 0, 0, 1.5}), ContractError);
}

TEST(SpatialComplexity, ConstantImageIsExactlyHalf) {
  for (double v : {0.0, 0.3, 1.0}) EXPECT_EQ(spatial_complexity(ConditionImage(13, 7, v)), 0.5);
}

TEST(SpatialComplexity, TwoEqualBins) {
  std::vector<double> px(32, 0.0);
  std::fill(px.begin() + 16, px.end(), 1.0);
  const double r = spatial_complexity(ConditionImage(8, 4, px));
  EXPECT_NEAR(r, 0.5 + std::log(2.0) / std::log(32.0), 1e-15);
  EXPECT_NEAR(r, 0.700, 1e-3);
}

TEST(SpatialComplexity, UniformHistogramIsExactlyOneAndAHalf) {
  EXPECT_EQ(spatial_complexity(uniform_histogram_image()), 1.5);
}

TEST(SpatialComplexity, PermutationInvariant) {
  Rng rng(4);
  std::vector<double> px(256);
  for (double& v : px) v = rng.uniform();
  const double r = spatial_complexity(ConditionImage(16, 16, px));
  for (int trial = 0; trial < 20; ++trial) {
    std::shuffle(px.begin(), px.end(), rng);
    ASSERT_EQ(spatial_complexity(ConditionImage(16, 16, px)), r);
  }
  EXPECT_GE(r, 0.5);
  EXPECT_LE(r, 1.5);
}

TEST(SpatialComplexity, AlwaysInRange) {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int bins = 2 + static_cast<int>(rng.uniform_int(0, 62));
    std::vector<double> px(100);
    for (double& v : px) v = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    const double r = spatial_complexity(ConditionImage(10, 10, px), bins);
    ASSERT_GE(r, 0.5);
    ASSERT_LE(r, 1.5);
  }
  EXPECT_THROW(spatial_complexity(ConditionImage(2, 2, 0.0), 1), ContractError);
}

TEST(ConditionalSteps, AffineMapSpotValues) {
  BaseScheduleConfig cfg;  // t_min 20, t_max 200
  EXPECT_EQ(conditional_steps(0.5, 1.0, cfg), 110);
  EXPECT_EQ(conditional_steps(0.5, 0.5, cfg), 55);
  EXPECT_EQ(conditional_steps(1.0, 1.5, cfg), 300);
  EXPECT_EQ(conditional_steps(0.0, 0.5, cfg), 10);
  EXPECT_EQ(conditional_steps(0.0, 0.01, cfg), 1);
}

TEST(ConditionalSteps, MonotoneInU) {
  BaseScheduleConfig cfg;
  for (double r : {0.5, 0.77, 1.0, 1.5}) {
    int prev = 0;
    for (int k = 0; k <= 1000; ++k) {
      const int t = conditional_steps(k / 1000.0, r, cfg);
      ASSERT_GE(t, prev);
      ASSERT_LE(t, static_cast<int>(std::ceil(1.5 * cfg.t_max)));
      prev = t;
    }
  }
}

TEST(CtsDecide, DeterministicAndInRange) {
  const auto p = make_params();
  BaseScheduleConfig cfg;
  Rng rng(12);
  std::vector<double> px(256);
  for (double& v : px) v = rng.uniform();
  const ConditionImage img(16, 16, px);
  const auto a = cts_decide(PromptInput{1, ""}, img, p, cfg);
  const auto b = cts_decide(PromptInput{1, ""}, img, p, cfg);
  EXPECT_EQ(a.t_cond, b.t_cond);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.f_p.values, b.f_p.values);
  EXPECT_EQ(a.f_d.values, b.f_d.values);
  EXPECT_GT(a.lambda, 0.0);
  EXPECT_LT(a.lambda, 1.0);
  EXPECT_GT(a.u, 0.0);
  EXPECT_LT(a.u, 1.0);
  EXPECT_EQ(a.r_s, spatial_complexity(img));
  EXPECT_EQ(a.t_cond, conditional_steps(a.u, a.r_s, cfg));
}

TEST(CtsDecide, ComplexConditionGetsMoreStepsThanBlank) {
  const auto p = make_params();
  BaseScheduleConfig cfg;
  const auto blank = cts_decide(PromptInput{0, ""}, ConditionImage(8, 8, 0.0), p, cfg);
  const auto busy = cts_decide(PromptInput{0, ""}, uniform_histogram_image(), p, cfg);
  EXPECT_EQ(blank.r_s, 0.5);
  EXPECT_EQ(busy.r_s, 1.5);
}

TEST(StepTarget, Formula) {
  EXPECT_EQ(step_target(0.5, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(step_target(1.1, 0.4), 0.5);
  EXPECT_EQ(step_target(1.5, 1.0), 1.0);
  EXPECT_EQ(edge_density(ConditionImage(4, 4, 0.0)), 0.0);
  EXPECT_EQ(edge_density(ConditionImage(2, 1, std::vector<double>{0.5, 0.51})), 0.5);
}

TEST(TrainGt, ZeroLossWhenHeadMatchesTarget) {
  auto p = make_params();
  p.g_t.w2.value().setZero();
  p.g_t.b2.value().setZero();  // u = 0.5 everywhere
  // all-ones condition: r_s = 0.5, density 1 -> target 0.5
  const std::vector<PromptInput> prompts = {{0, ""}, {3, ""}};
  const std::vector<ConditionImage> conds = {ConditionImage(8, 8, 1.0), ConditionImage(16, 16, 1.0)};
  EXPECT_EQ(train_gt_auxiliary(prompts, conds, p, 0.0), 0.0);
}

TEST(TrainGt, LossDecreasesAndOnlyStepHeadMoves) {
  auto p = make_params();
  Rng rng(77);
  std::vector<PromptInput> prompts;
  std::vector<ConditionImage> conds;
  for (int i = 0; i < 16; ++i) {
    prompts.push_back({static_cast<int>(i % 5), ""});
    std::vector<double> px(64);
    const double busy = i / 16.0;
    for (double& v : px) v = rng.uniform() < busy ? rng.uniform() : 0.0;
    conds.emplace_back(8, 8, px);
  }
  const Matrix table = p.prompt_table.value();
  const Matrix beta_w1 = p.g_beta.w1.value();
  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) losses.push_back(train_gt_auxiliary(prompts, conds, p, 0.5));
  int increases = 0;
  for (std::size_t i = 1; i < losses.size(); ++i) increases += losses[i] > losses[i - 1];
  EXPECT_EQ(increases, 0);
  EXPECT_LT(losses.back(), 0.95 * losses.front());
  EXPECT_EQ(p.prompt_table.value(), table);
  EXPECT_EQ(p.g_beta.w1.value(), beta_w1);
}

TEST(TrainGt, RejectsEmptyBatch) {
  auto p = make_params();
  EXPECT_THROW(train_gt_auxiliary({}, {}, p, 0.1), ContractError);
}
