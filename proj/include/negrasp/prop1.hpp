#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "negrasp/vec.hpp"

namespace negrasp {

// Finite toy model for the guidance factorization: a strictly positive
// joint p(g, s, t) over discrete grasp / scene / text values, plus the
// probability q(g, s) that the negative-prompt event fires. Valid toys use
// a q that is constant in (g, s), matching the independence assumption the
// factorization rests on; planting structure into q builds negative
// controls.
struct DiscreteToy {
  int num_g = 0;
  int num_s = 0;
  int num_t = 0;
  std::vector<double> joint;  // [g * num_s * num_t + s * num_t + t]
  MatX q;                     // num_g x num_s

  double& p(int g, int s, int t) {
    return joint[(g * num_s + s) * num_t + t];
  }
  double p(int g, int s, int t) const {
    return joint[(g * num_s + s) * num_t + t];
  }
};

class DegenerateInputError : public std::runtime_error {
 public:
  explicit DegenerateInputError(const std::string& m) : std::runtime_error(m) {}
};

struct Prop1LineCheck {
  std::string line;
  double max_rel_error = 0.0;
};

struct Prop1Result {
  // Max over the final-form comparison and every replayed derivation line.
  double max_rel_error = 0.0;
  // Normalized factorized form vs the directly enumerated conditional.
  double final_form_error = 0.0;
  std::vector<Prop1LineCheck> lines;
};

// Enumerates p(g | s, t, not-tilde) directly from the joint and compares it
// with the normalized factorized form p(g|s) p(g|t,s) / p(g|tilde,s). Each
// derivation step that drops a factor is replayed to confirm the dropped
// factor does not depend on g; violated independence assumptions surface
// there. Throws DegenerateInputError on zero probabilities.
Prop1Result verify_proposition1(const DiscreteToy& toy);

// Random strictly positive joint with a constant negative-event rate.
DiscreteToy make_independent_toy(std::uint64_t seed, int num_g = 3,
                                 int num_s = 3, int num_t = 3);

// Negative control: the event rate swings with the scene value.
DiscreteToy make_dependent_toy(std::uint64_t seed, int num_g = 3,
                               int num_s = 3, int num_t = 3);

}  // namespace negrasp
