#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "negrasp/denoiser.hpp"
#include "negrasp/schedule.hpp"
#include "negrasp/se3.hpp"
#include "negrasp/training.hpp"

namespace negrasp {

enum class SamplerKind { kDdpm, kDdim };

struct GuidanceConfig {
  double w = 0.2;       // negative guidance scale
  int steps = 200;      // DDIM sub-sequence length; DDPM always runs full T
  SamplerKind sampler_kind = SamplerKind::kDdpm;
  int num_grasps = 64;
  std::uint64_t seed = 0;
};

// Timestep-independent conditioning, computed once per scene-prompt pair
// and shared across all chains.
struct ConditioningCache {
  SceneTokens tokens;
  Embedding text;
  Embedding neg;
  Embedding null_text;
};

// Encodes the scene and prompt and evaluates the negative embedding. The
// negative head is grasp- and timestep-independent; this is asserted by
// evaluating it at two distinct (g, t) pairs.
ConditioningCache precompute(const SceneCloud& scene, const std::string& prompt,
                             const DenoiserParams& params,
                             Exec exec = Exec::kParallel);

// eps_null + w * (eps_text - eps_neg), three forward passes sharing the
// cached tokens. w = 0 and text == neg short-circuit to the unconditional
// prediction.
Vec7 composed_epsilon(const Vec7& g_t, int t, const ConditioningCache& cache,
                      const DenoiserParams& params, double w);

// One ancestral step. z must be zero at t = 1.
Vec7 ddpm_step(const Vec7& g_t, int t, const Vec7& eps_tilde, const Vec7& z,
               const NoiseSchedule& sched);

// Deterministic step t -> t_prev (eta = 0); alpha_bar(0) is defined as 1.
Vec7 ddim_step(const Vec7& g_t, int t, int t_prev, const Vec7& eps_tilde,
               const NoiseSchedule& sched);

// Evenly spaced ascending sub-sequence of 1..total ending at total.
std::vector<int> ddim_subsequence(int total_steps, int num_steps);

struct SampleReport {
  int clamp_count = 0;       // widths clamped into [0, max_width]
  double wall_seconds = 0.0;
};

// Runs num_grasps independent reverse chains and maps the results back to
// world space. Chains draw from streams keyed by (seed, chain index), so
// output is identical for any thread count.
std::vector<GraspPose> sample_grasps(const SceneCloud& scene,
                                     const std::string& prompt,
                                     const DenoiserParams& params,
                                     const NoiseSchedule& sched,
                                     const GuidanceConfig& config,
                                     const Normalization& norm,
                                     SampleReport* report = nullptr,
                                     Exec exec = Exec::kParallel);

}  // namespace negrasp
