#include "negrasp/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace negrasp {

int NoiseSchedule::check(int t) const {
  if (t < 1 || t > steps) {
    throw std::invalid_argument("schedule: step index out of range");
  }
  return t;
}

NoiseSchedule linear_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1 || !(beta_start > 0.0) || !(beta_start <= beta_end) ||
      !(beta_end < 1.0)) {
    throw std::invalid_argument("linear_schedule: bad parameters");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta_table.resize(steps);
  s.alpha_table.resize(steps);
  s.alpha_bar_table.resize(steps);
  double prod = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        steps == 1 ? beta_start
                   : beta_start + (t - 1) * (beta_end - beta_start) / (steps - 1);
    s.beta_table[t - 1] = beta;
    s.alpha_table[t - 1] = 1.0 - beta;
    prod *= 1.0 - beta;
    s.alpha_bar_table[t - 1] = prod;
  }
  return s;
}

Vec7 q_sample(const Vec7& g0, int t, const Vec7& eps,
              const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps) {
    throw std::invalid_argument("q_sample: step index out of range");
  }
  const double abar = sched.alpha_bar(t);
  return std::sqrt(abar) * g0 + std::sqrt(1.0 - abar) * eps;
}

Vec7 single_step_noising(const Vec7& g_prev, int t, const Vec7& z,
                         const NoiseSchedule& sched) {
  const double beta = sched.beta(t);
  return std::sqrt(1.0 - beta) * g_prev + std::sqrt(beta) * z;
}

}  // namespace negrasp
