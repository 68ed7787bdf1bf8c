#include "negrasp/guidance.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "negrasp/rng.hpp"

namespace negrasp {
namespace {

DenoiserConfig tiny_config() {
  DenoiserConfig cfg;
  cfg.embed_dim = 16;
  cfg.time_dim = 8;
  cfg.num_tokens = 4;
  cfg.num_heads = 2;
  cfg.vocabulary = {"ball", "box"};
  return cfg;
}

SceneCloud random_cloud(int n, std::uint64_t seed) {
  Rng rng({seed, 40});
  SceneCloud c;
  c.object_names[0] = "scene";
  for (int i = 0; i < n; ++i) {
    c.points.emplace_back(rng.gaussian(), rng.gaussian(), rng.gaussian());
    c.object_labels.push_back(0);
  }
  return c;
}

struct GuidanceFixture {
  DenoiserParams params = init_params(tiny_config(), 71);
  SceneCloud cloud = random_cloud(24, 13);
  NoiseSchedule sched = default_schedule();
};

TEST(Precompute, TokensSharedTextDiffers) {
  GuidanceFixture f;
  const ConditioningCache a = precompute(f.cloud, "Grasp the ball", f.params);
  const ConditioningCache b = precompute(f.cloud, "Grasp the box", f.params);
  EXPECT_TRUE(a.tokens.tokens == b.tokens.tokens);
  EXPECT_FALSE(a.text.vec == b.text.vec);
}

TEST(Precompute, NegativeEmbeddingIndependentOfGraspAndStep) {
  GuidanceFixture f;
  const ConditioningCache cache = precompute(f.cloud, "Grasp the ball", f.params);
  const Embedding text = encode_text("Grasp the ball", f.params);
  Vec7 e1 = Vec7::Zero();
  e1(0) = 1.0;
  const DenoiserOutput at_origin =
      forward(Vec7::Zero(), cache.tokens, text, 1, f.params);
  const DenoiserOutput elsewhere = forward(e1, cache.tokens, text, 200, f.params);
  EXPECT_TRUE(at_origin.neg_embedding.vec == elsewhere.neg_embedding.vec);
  EXPECT_TRUE(cache.neg.vec == at_origin.neg_embedding.vec);
}

TEST(Precompute, CacheReuseMatchesRecompute) {
  GuidanceFixture f;
  const ConditioningCache cache = precompute(f.cloud, "Grasp the ball", f.params);
  Rng rng({3, 3});
  for (int chain = 0; chain < 8; ++chain) {
    Vec7 g;
    for (int k = 0; k < 7; ++k) g(k) = rng.gaussian();
    const int t = 1 + static_cast<int>(rng.below(200));
    const Vec7 with_cache = composed_epsilon(g, t, cache, f.params, 0.2);
    const ConditioningCache fresh =
        precompute(f.cloud, "Grasp the ball", f.params);
    const Vec7 recomputed = composed_epsilon(g, t, fresh, f.params, 0.2);
    EXPECT_TRUE(with_cache == recomputed);
  }
}

TEST(ComposedEpsilon, MockArithmetic) {
  // Scalar sanity for the guidance formula itself.
  const double null_eps = 0.1, text_eps = 0.5, neg_eps = 0.3, w = 0.2;
  EXPECT_DOUBLE_EQ(null_eps + w * (text_eps - neg_eps), 0.14);
}

TEST(ComposedEpsilon, MatchesThreeForwardPasses) {
  GuidanceFixture f;
  const ConditioningCache cache = precompute(f.cloud, "Grasp the box", f.params);
  Vec7 g;
  g << 0.2, -0.1, 0.4, 0.0, 0.3, -0.2, 0.1;
  const int t = 42;
  const Vec7 eps_null =
      forward(g, cache.tokens, cache.null_text, t, f.params).eps_pred;
  const Vec7 eps_text = forward(g, cache.tokens, cache.text, t, f.params).eps_pred;
  const Vec7 eps_neg = forward(g, cache.tokens, cache.neg, t, f.params).eps_pred;
  const Vec7 expected = eps_null + 0.2 * (eps_text - eps_neg);
  EXPECT_TRUE(composed_epsilon(g, t, cache, f.params, 0.2) == expected);
}

TEST(ComposedEpsilon, ZeroWeightReturnsUnconditionalBitwise) {
  GuidanceFixture f;
  const ConditioningCache cache = precompute(f.cloud, "Grasp the box", f.params);
  Vec7 g = Vec7::Constant(0.3);
  const Vec7 uncond =
      forward(g, cache.tokens, cache.null_text, 7, f.params).eps_pred;
  EXPECT_TRUE(composed_epsilon(g, 7, cache, f.params, 0.0) == uncond);
}

TEST(ComposedEpsilon, TextEqualsNegCancelsBitwise) {
  GuidanceFixture f;
  ConditioningCache cache = precompute(f.cloud, "Grasp the box", f.params);
  cache.neg = cache.text;
  Vec7 g = Vec7::Constant(-0.2);
  const Vec7 uncond =
      forward(g, cache.tokens, cache.null_text, 9, f.params).eps_pred;
  EXPECT_TRUE(composed_epsilon(g, 9, cache, f.params, 0.7) == uncond);
}

TEST(ComposedEpsilon, AffineInW) {
  GuidanceFixture f;
  const ConditioningCache cache = precompute(f.cloud, "Grasp the ball", f.params);
  Vec7 g;
  g << 0.5, 0.1, -0.3, 0.2, -0.6, 0.4, 0.0;
  const Vec7 e0 = composed_epsilon(g, 33, cache, f.params, 0.0);
  const Vec7 e1 = composed_epsilon(g, 33, cache, f.params, 1.0);
  const Vec7 e02 = composed_epsilon(g, 33, cache, f.params, 0.2);
  const Vec7 interp = e0 + 0.2 * (e1 - e0);
  EXPECT_LT((e02 - interp).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(composed_epsilon(g, 33, cache, f.params, -0.1),
               std::invalid_argument);
}

TEST(DdpmStep, ZeroEpsZeroNoiseIsPureRescale) {
  const NoiseSchedule s = default_schedule();
  Vec7 g;
  g << 1, 2, 3, 4, 5, 6, 7;
  const Vec7 out = ddpm_step(g, 1, Vec7::Zero(), Vec7::Zero(), s);
  EXPECT_TRUE(out.isApprox(g / std::sqrt(s.alpha(1)), 1e-15));
  for (int t : {5, 60, 200}) {
    const Vec7 o = ddpm_step(g, t, Vec7::Zero(), Vec7::Zero(), s);
    EXPECT_TRUE(o.isApprox(g / std::sqrt(s.alpha(t)), 1e-15));
  }
}

TEST(DdpmStep, NonzeroNoiseAtFinalStepThrows) {
  const NoiseSchedule s = default_schedule();
  EXPECT_THROW(ddpm_step(Vec7::Zero(), 1, Vec7::Zero(), Vec7::Ones(), s),
               std::invalid_argument);
}

TEST(DdpmStep, ExactNoiseMovesTowardSignalInExpectation) {
  // With eps_tilde equal to the true forward noise, the expected squared
  // distance to the scaled signal shrinks across one reverse step.
  const NoiseSchedule s = default_schedule();
  Vec7 g0;
  g0 << 0.4, -0.7, 0.2, 0.9, -0.3, 0.5, -0.1;
  const int t = 10;
  const int draws = 10000;
  Rng rng({404, kStreamOracle});
  double sum_before = 0.0, sum_before_sq = 0.0;
  double sum_after = 0.0, sum_after_sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    Vec7 eps, z;
    for (int k = 0; k < 7; ++k) {
      eps(k) = rng.gaussian();
      z(k) = rng.gaussian();
    }
    const Vec7 g_t = q_sample(g0, t, eps, s);
    const double before = (g_t - std::sqrt(s.alpha_bar(t)) * g0).squaredNorm();
    const Vec7 g_prev = ddpm_step(g_t, t, eps, z, s);
    const double after =
        (g_prev - std::sqrt(s.alpha_bar(t - 1)) * g0).squaredNorm();
    sum_before += before;
    sum_before_sq += before * before;
    sum_after += after;
    sum_after_sq += after * after;
  }
  const double mean_before = sum_before / draws;
  const double mean_after = sum_after / draws;
  const double var_before =
      sum_before_sq / draws - mean_before * mean_before;
  const double var_after = sum_after_sq / draws - mean_after * mean_after;
  const double se = std::sqrt((var_before + var_after) / draws);
  EXPECT_LT(mean_after + 3.0 * se, mean_before);
}

// Analytic optimal denoiser for a two-mode 1-D target (other dimensions
// standard normal); drives the full chain and checks mode-weight recovery.
struct GaussianMixture {
  std::vector<double> weights, means, sigmas;

  double optimal_eps(double x, int t, const NoiseSchedule& s) const {
    const double a = std::sqrt(s.alpha_bar(t));
    const double v = 1.0 - s.alpha_bar(t);
    double z = 0.0, x0_hat = 0.0;
    std::vector<double> resp(weights.size());
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double s2 = s.alpha_bar(t) * sigmas[k] * sigmas[k] + v;
      const double d = x - a * means[k];
      resp[k] = weights[k] * std::exp(-d * d / (2.0 * s2)) / std::sqrt(s2);
      z += resp[k];
    }
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const double s2 = s.alpha_bar(t) * sigmas[k] * sigmas[k] + v;
      const double cond_mean =
          means[k] + a * sigmas[k] * sigmas[k] / s2 * (x - a * means[k]);
      x0_hat += resp[k] / z * cond_mean;
    }
    return (x - a * x0_hat) / std::sqrt(v);
  }
};

TEST(DdpmChain, RecoversTwoModeToyWeights) {
  const NoiseSchedule s = default_schedule();
  const GaussianMixture target{{0.7, 0.3}, {0.75, -0.75}, {0.25, 0.25}};
  const GaussianMixture unit{{1.0}, {0.0}, {1.0}};
  const int chains = 4000;
  int plus_mode = 0;
  for (int c = 0; c < chains; ++c) {
    Rng rng({808, kStreamChain, static_cast<std::uint64_t>(c)});
    Vec7 g;
    for (int k = 0; k < 7; ++k) g(k) = rng.gaussian();
    for (int t = s.steps; t >= 1; --t) {
      Vec7 eps;
      eps(0) = target.optimal_eps(g(0), t, s);
      for (int k = 1; k < 7; ++k) eps(k) = unit.optimal_eps(g(k), t, s);
      Vec7 z = Vec7::Zero();
      if (t > 1) {
        for (int k = 0; k < 7; ++k) z(k) = rng.gaussian();
      }
      g = ddpm_step(g, t, eps, z, s);
    }
    if (g(0) > 0.0) ++plus_mode;
  }
  const double weight = static_cast<double>(plus_mode) / chains;
  // Total variation over the two modes within 0.05 of the ground truth.
  EXPECT_NEAR(weight, 0.7, 0.05);
}

TEST(DdimStep, ExactInversionOfForwardNoise) {
  const NoiseSchedule s = default_schedule();
  Vec7 g0;
  g0 << 0.3, 0.1, -0.2, 0.5, -0.4, 0.2, 0.6;
  Rng rng({31, 9});
  Vec7 eps;
  for (int k = 0; k < 7; ++k) eps(k) = rng.gaussian();
  const int t = 120;
  const Vec7 g_t = q_sample(g0, t, eps, s);
  // With eps_tilde equal to the true forward noise, the predicted signal
  // reconstructs g0, so stepping to t_prev lands on q_sample at t_prev with
  // the same noise.
  const Vec7 stepped = ddim_step(g_t, t, 60, eps, s);
  EXPECT_TRUE(stepped.isApprox(q_sample(g0, 60, eps, s), 1e-12));
}

TEST(DdimStep, BoundaryUsesUnitAlphaBar) {
  const NoiseSchedule s = default_schedule();
  Vec7 g0 = Vec7::Constant(0.25);
  Vec7 eps = Vec7::Constant(-0.5);
  const Vec7 g_t = q_sample(g0, 40, eps, s);
  const Vec7 out = ddim_step(g_t, 40, 0, eps, s);
  EXPECT_TRUE(out.isApprox(g0, 1e-12));
}

TEST(DdimStep, RejectsNonDecreasingSteps) {
  const NoiseSchedule s = default_schedule();
  EXPECT_THROW(ddim_step(Vec7::Zero(), 10, 10, Vec7::Zero(), s),
               std::invalid_argument);
  EXPECT_THROW(ddim_step(Vec7::Zero(), 10, 11, Vec7::Zero(), s),
               std::invalid_argument);
}

TEST(DdimSubsequence, CoversTableStepCounts) {
  for (int steps : {10, 20, 50, 100, 200}) {
    const std::vector<int> taus = ddim_subsequence(200, steps);
    EXPECT_EQ(static_cast<int>(taus.size()), steps);
    EXPECT_EQ(taus.back(), 200);
    for (std::size_t i = 1; i < taus.size(); ++i) {
      EXPECT_LT(taus[i - 1], taus[i]);
    }
    EXPECT_GE(taus.front(), 1);
  }
  EXPECT_THROW(ddim_subsequence(200, 0), std::invalid_argument);
  EXPECT_THROW(ddim_subsequence(200, 201), std::invalid_argument);
}

TEST(SampleGrasps, EmptyRequestGivesEmptyList) {
  GuidanceFixture f;
  GuidanceConfig cfg;
  cfg.num_grasps = 0;
  const std::vector<GraspPose> out = sample_grasps(
      f.cloud, "Grasp the ball", f.params, f.sched, cfg, Normalization{});
  EXPECT_TRUE(out.empty());
}

TEST(SampleGrasps, DeterministicAndInRange) {
  GuidanceFixture f;
  GuidanceConfig cfg;
  cfg.num_grasps = 6;
  cfg.steps = 20;
  cfg.sampler_kind = SamplerKind::kDdim;
  cfg.seed = 5;
  SampleReport r1, r2;
  const auto a = sample_grasps(f.cloud, "Grasp the ball", f.params, f.sched,
                               cfg, Normalization{}, &r1);
  const auto b = sample_grasps(f.cloud, "Grasp the ball", f.params, f.sched,
                               cfg, Normalization{}, &r2);
  ASSERT_EQ(a.size(), 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].to_vec7() == b[i].to_vec7());
    EXPECT_GE(a[i].width, 0.0);
    EXPECT_LE(a[i].width, kMaxGraspWidth);
    EXPECT_LE(a[i].omega.norm(), 3.14159265358979323846 + 1e-12);
  }
  EXPECT_EQ(r1.clamp_count, r2.clamp_count);
}

TEST(SampleGrasps, DdimStepCountsAllFinite) {
  GuidanceFixture f;
  for (int steps : {10, 20, 50}) {
    GuidanceConfig cfg;
    cfg.num_grasps = 3;
    cfg.steps = steps;
    cfg.sampler_kind = SamplerKind::kDdim;
    const auto out = sample_grasps(f.cloud, "Grasp the box", f.params, f.sched,
                                   cfg, Normalization{});
    for (const GraspPose& g : out) {
      EXPECT_TRUE(g.to_vec7().allFinite());
    }
  }
}

}  // namespace
}  // namespace negrasp
