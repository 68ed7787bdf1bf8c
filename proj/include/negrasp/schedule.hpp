#pragma once

#include <vector>

#include "negrasp/vec.hpp"

namespace negrasp {

// Variance schedule for the forward noising process. Steps are indexed
// 1..T in the API; index 0 of alpha_bar is defined as 1 for the benefit of
// the deterministic sampler boundary.
struct NoiseSchedule {
  int steps = 0;
  std::vector<double> beta_table;       // beta_table[t-1]  = beta_t
  std::vector<double> alpha_table;      // 1 - beta_t
  std::vector<double> alpha_bar_table;  // prod_{i<=t} alpha_i

  double beta(int t) const { return beta_table[check(t) - 1]; }
  double alpha(int t) const { return alpha_table[check(t) - 1]; }
  // Accepts t = 0 and returns 1.
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    return alpha_bar_table[check(t) - 1];
  }

 private:
  int check(int t) const;
};

// beta rises linearly from beta_start to beta_end across T steps.
NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end);

inline NoiseSchedule default_schedule() {
  return linear_schedule(200, 1e-4, 0.02);
}

// Closed-form jump to step t: sqrt(abar_t) g0 + sqrt(1 - abar_t) eps.
// Noise is caller-supplied for determinism.
Vec7 q_sample(const Vec7& g0, int t, const Vec7& eps,
              const NoiseSchedule& sched);

// One Markov step: sqrt(1 - beta_t) g_prev + sqrt(beta_t) z.
Vec7 single_step_noising(const Vec7& g_prev, int t, const Vec7& z,
                         const NoiseSchedule& sched);

}  // namespace negrasp
