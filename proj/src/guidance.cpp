#include "negrasp/guidance.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "negrasp/rng.hpp"

namespace negrasp {

ConditioningCache precompute(const SceneCloud& scene, const std::string& prompt,
                             const DenoiserParams& params, Exec exec) {
  ConditioningCache cache;
  cache.tokens = encode_scene(scene, params, exec);
  cache.text = encode_text(prompt, params);
  cache.null_text = encode_text(kNullPrompt, params);

  const Vec7 zero = Vec7::Zero();
  Vec7 e1 = Vec7::Zero();
  e1(0) = 1.0;
  const DenoiserOutput a = forward(zero, cache.tokens, cache.text, 1, params);
  const DenoiserOutput b = forward(e1, cache.tokens, cache.text, 200, params);
  if ((a.neg_embedding.vec.array() != b.neg_embedding.vec.array()).any()) {
    throw std::logic_error(
        "precompute: negative embedding depends on (g, t); cache is invalid");
  }
  cache.neg = a.neg_embedding;
  return cache;
}

Vec7 composed_epsilon(const Vec7& g_t, int t, const ConditioningCache& cache,
                      const DenoiserParams& params, double w) {
  if (w < 0.0) throw std::invalid_argument("composed_epsilon: w < 0");
  const Vec7 eps_null =
      forward(g_t, cache.tokens, cache.null_text, t, params).eps_pred;
  if (w == 0.0 ||
      (cache.text.vec.array() == cache.neg.vec.array()).all()) {
    return eps_null;
  }
  const Vec7 eps_text =
      forward(g_t, cache.tokens, cache.text, t, params).eps_pred;
  const Vec7 eps_neg =
      forward(g_t, cache.tokens, cache.neg, t, params).eps_pred;
  return eps_null + w * (eps_text - eps_neg);
}

Vec7 ddpm_step(const Vec7& g_t, int t, const Vec7& eps_tilde, const Vec7& z,
               const NoiseSchedule& sched) {
  if (t == 1 && !z.isZero(0.0)) {
    throw std::invalid_argument("ddpm_step: z must be zero at t = 1");
  }
  const double alpha = sched.alpha(t);
  const double abar = sched.alpha_bar(t);
  const double beta = sched.beta(t);
  return (g_t - (1.0 - alpha) / std::sqrt(1.0 - abar) * eps_tilde) /
             std::sqrt(alpha) +
         std::sqrt(beta) * z;
}

Vec7 ddim_step(const Vec7& g_t, int t, int t_prev, const Vec7& eps_tilde,
               const NoiseSchedule& sched) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev >= t");
  if (t_prev < 0) throw std::invalid_argument("ddim_step: t_prev < 0");
  const double abar_t = sched.alpha_bar(t);
  const double abar_prev = sched.alpha_bar(t_prev);
  const Vec7 g0_hat =
      (g_t - std::sqrt(1.0 - abar_t) * eps_tilde) / std::sqrt(abar_t);
  return std::sqrt(abar_prev) * g0_hat +
         std::sqrt(1.0 - abar_prev) * eps_tilde;
}

std::vector<int> ddim_subsequence(int total_steps, int num_steps) {
  if (num_steps < 1 || num_steps > total_steps) {
    throw std::invalid_argument("ddim_subsequence: invalid step count");
  }
  std::vector<int> taus(num_steps);
  for (int i = 1; i <= num_steps; ++i) {
    taus[i - 1] = static_cast<int>(
        static_cast<long long>(i) * total_steps / num_steps);
  }
  taus.back() = total_steps;
  return taus;
}

std::vector<GraspPose> sample_grasps(const SceneCloud& scene,
                                     const std::string& prompt,
                                     const DenoiserParams& params,
                                     const NoiseSchedule& sched,
                                     const GuidanceConfig& config,
                                     const Normalization& norm,
                                     SampleReport* report, Exec exec) {
  const auto start = std::chrono::steady_clock::now();
  const ConditioningCache cache = precompute(scene, prompt, params, exec);

  const int n = config.num_grasps;
  std::vector<GraspPose> out(std::max(n, 0));
  std::vector<int> clamped(std::max(n, 0), 0);
  const std::vector<int> taus =
      config.sampler_kind == SamplerKind::kDdim
          ? ddim_subsequence(sched.steps, config.steps)
          : std::vector<int>();

  const bool parallel = exec == Exec::kParallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int c = 0; c < n; ++c) {
    Rng rng({config.seed, kStreamChain, static_cast<std::uint64_t>(c)});
    Vec7 g;
    for (int k = 0; k < 7; ++k) g(k) = rng.gaussian();

    if (config.sampler_kind == SamplerKind::kDdpm) {
      for (int t = sched.steps; t >= 1; --t) {
        const Vec7 eps = composed_epsilon(g, t, cache, params, config.w);
        Vec7 z = Vec7::Zero();
        if (t > 1) {
          for (int k = 0; k < 7; ++k) z(k) = rng.gaussian();
        }
        g = ddpm_step(g, t, eps, z, sched);
      }
    } else {
      for (int i = static_cast<int>(taus.size()) - 1; i >= 0; --i) {
        const int t = taus[i];
        const int t_prev = i == 0 ? 0 : taus[i - 1];
        const Vec7 eps = composed_epsilon(g, t, cache, params, config.w);
        g = ddim_step(g, t, t_prev, eps, sched);
      }
    }

    const Vec7 world = norm.to_world(g);
    GraspPose pose = GraspPose::from_vec7(world);
    if (pose.width < 0.0) {
      pose.width = 0.0;
      clamped[c] = 1;
    } else if (pose.width > kMaxGraspWidth) {
      pose.width = kMaxGraspWidth;
      clamped[c] = 1;
    }
    out[c] = pose.canonicalized();
  }

  if (report != nullptr) {
    report->clamp_count = 0;
    for (int c : clamped) report->clamp_count += c;
    report->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  }
  return out;
}

}  // namespace negrasp
