#include "negrasp/prop1.hpp"

#include <algorithm>
#include <cmath>

#include "negrasp/rng.hpp"

namespace negrasp {
namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace

Prop1Result verify_proposition1(const DiscreteToy& toy) {
  const int ng = toy.num_g, ns = toy.num_s, nt = toy.num_t;
  if (ng < 2 || ns < 1 || nt < 1 ||
      static_cast<int>(toy.joint.size()) != ng * ns * nt ||
      toy.q.rows() != ng || toy.q.cols() != ns) {
    throw std::invalid_argument("verify_proposition1: malformed toy");
  }
  double total = 0.0;
  for (double v : toy.joint) {
    if (!(v > 0.0)) {
      throw DegenerateInputError("verify_proposition1: zero joint probability");
    }
    total += v;
  }
  for (int g = 0; g < ng; ++g) {
    for (int s = 0; s < ns; ++s) {
      if (!(toy.q(g, s) > 0.0) || !(toy.q(g, s) < 1.0)) {
        throw DegenerateInputError(
            "verify_proposition1: event probability not in (0,1)");
      }
    }
  }

  auto P = [&](int g, int s, int t) { return toy.p(g, s, t) / total; };

  std::vector<double> p_gs(ng * ns, 0.0), p_g(ng, 0.0), p_s(ns, 0.0);
  for (int g = 0; g < ng; ++g) {
    for (int s = 0; s < ns; ++s) {
      for (int t = 0; t < nt; ++t) p_gs[g * ns + s] += P(g, s, t);
      p_g[g] += p_gs[g * ns + s];
      p_s[s] += p_gs[g * ns + s];
    }
  }
  // Event rate marginalized over scenes: p(event | g).
  std::vector<double> q_g(ng, 0.0);
  for (int g = 0; g < ng; ++g) {
    for (int s = 0; s < ns; ++s) q_g[g] += toy.q(g, s) * p_gs[g * ns + s];
    q_g[g] /= p_g[g];
  }

  Prop1Result result;

  // Final factorized form against the direct enumeration, for every (s,t).
  for (int s = 0; s < ns; ++s) {
    for (int t = 0; t < nt; ++t) {
      std::vector<double> direct(ng), fact(ng);
      double zd = 0.0, zf = 0.0;
      double p_st = 0.0;
      for (int g = 0; g < ng; ++g) p_st += P(g, s, t);
      double p_event_s = 0.0;
      for (int g = 0; g < ng; ++g) p_event_s += p_gs[g * ns + s] * toy.q(g, s);
      for (int g = 0; g < ng; ++g) {
        direct[g] = P(g, s, t) * (1.0 - toy.q(g, s));
        zd += direct[g];
        const double p_g_given_s = p_gs[g * ns + s] / p_s[s];
        const double p_g_given_ts = P(g, s, t) / p_st;
        const double p_g_given_event_s =
            p_gs[g * ns + s] * toy.q(g, s) / p_event_s;
        fact[g] = p_g_given_s * p_g_given_ts / p_g_given_event_s;
        zf += fact[g];
      }
      for (int g = 0; g < ng; ++g) {
        result.final_form_error = std::max(
            result.final_form_error, rel_err(fact[g] / zf, direct[g] / zd));
      }
    }
  }

  // Replay the derivation steps that rest on the independence assumption.
  Prop1LineCheck event_given_g{"p(event|g,t,s) == p(event|g)", 0.0};
  for (int g = 0; g < ng; ++g) {
    for (int s = 0; s < ns; ++s) {
      event_given_g.max_rel_error = std::max(
          event_given_g.max_rel_error,
          rel_err(1.0 - toy.q(g, s), 1.0 - q_g[g]));
    }
  }
  result.lines.push_back(event_given_g);

  // The negation is folded into a reciprocal; the dropped factor
  // (1 - p(event|g)) p(event|g) must not depend on g.
  Prop1LineCheck negation{"(1-p(event|g)) p(event|g) independent of g", 0.0};
  double lo = 1.0, hi = 0.0;
  for (int g = 0; g < ng; ++g) {
    const double r = (1.0 - q_g[g]) * q_g[g];
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  negation.max_rel_error = hi / lo - 1.0;
  result.lines.push_back(negation);

  Prop1LineCheck scene_given_g{"p(s|g,event) == p(s|g)", 0.0};
  for (int g = 0; g < ng; ++g) {
    for (int s = 0; s < ns; ++s) {
      const double with_event =
          p_gs[g * ns + s] * toy.q(g, s) / (p_g[g] * q_g[g]);
      const double without = p_gs[g * ns + s] / p_g[g];
      scene_given_g.max_rel_error =
          std::max(scene_given_g.max_rel_error, rel_err(with_event, without));
    }
  }
  result.lines.push_back(scene_given_g);

  result.max_rel_error = result.final_form_error;
  for (const Prop1LineCheck& line : result.lines) {
    result.max_rel_error = std::max(result.max_rel_error, line.max_rel_error);
  }
  return result;
}

DiscreteToy make_independent_toy(std::uint64_t seed, int num_g, int num_s,
                                 int num_t) {
  Rng rng({seed, kStreamOracle});
  DiscreteToy toy;
  toy.num_g = num_g;
  toy.num_s = num_s;
  toy.num_t = num_t;
  toy.joint.resize(num_g * num_s * num_t);
  for (double& v : toy.joint) v = 0.2 + rng.uniform();
  const double q0 = 0.1 + 0.8 * rng.uniform();
  toy.q = MatX::Constant(num_g, num_s, q0);
  return toy;
}

DiscreteToy make_dependent_toy(std::uint64_t seed, int num_g, int num_s,
                               int num_t) {
  DiscreteToy toy = make_independent_toy(seed, num_g, num_s, num_t);
  // Plant a strong scene dependence into the event rate.
  for (int g = 0; g < num_g; ++g) {
    for (int s = 0; s < num_s; ++s) {
      toy.q(g, s) = 0.15 + 0.7 * (num_s > 1 ? double(s) / (num_s - 1) : 0.0);
    }
  }
  return toy;
}

}  // namespace negrasp
