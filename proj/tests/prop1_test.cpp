#include "negrasp/prop1.hpp"

#include "gtest/gtest.h"

namespace negrasp {
namespace {

TEST(Prop1, UniformToyMatchesExactly) {
  DiscreteToy toy;
  toy.num_g = toy.num_s = toy.num_t = 2;
  toy.joint.assign(8, 0.125);
  toy.q = MatX::Constant(2, 2, 0.5);
  const Prop1Result r = verify_proposition1(toy);
  EXPECT_LT(r.max_rel_error, 1e-12);
}

TEST(Prop1, RandomIndependentToysStayExact) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DiscreteToy toy = make_independent_toy(seed, 4, 3, 2);
    const Prop1Result r = verify_proposition1(toy);
    worst = std::max(worst, r.max_rel_error);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Prop1, ConstantEventRateReducesToPlainConditional) {
  // With p(event|g) constant, the negated conditional collapses onto
  // p(g|s,t): verify by direct enumeration.
  const DiscreteToy toy = make_independent_toy(17, 3, 2, 2);
  double total = 0.0;
  for (double v : toy.joint) total += v;
  for (int s = 0; s < toy.num_s; ++s) {
    for (int t = 0; t < toy.num_t; ++t) {
      double z_neg = 0.0, z_plain = 0.0;
      for (int g = 0; g < toy.num_g; ++g) {
        z_neg += toy.p(g, s, t) / total * (1.0 - toy.q(g, s));
        z_plain += toy.p(g, s, t) / total;
      }
      for (int g = 0; g < toy.num_g; ++g) {
        const double with_negation =
            toy.p(g, s, t) / total * (1.0 - toy.q(g, s)) / z_neg;
        const double plain = toy.p(g, s, t) / total / z_plain;
        EXPECT_NEAR(with_negation, plain, 1e-14);
      }
    }
  }
}

TEST(Prop1, PlantedSceneDependenceIsDetected) {
  const DiscreteToy toy = make_dependent_toy(3);
  const Prop1Result r = verify_proposition1(toy);
  EXPECT_GT(r.max_rel_error, 1e-3);
  // The violated step is the conditional-independence replay.
  bool found = false;
  for (const Prop1LineCheck& line : r.lines) {
    if (line.line.find("p(event|g,t,s)") != std::string::npos) {
      EXPECT_GT(line.max_rel_error, 1e-3);
      found = true;
    }
  }
  EXPECT_TRUE(found);
}

TEST(Prop1, DegenerateInputsThrow) {
  DiscreteToy toy = make_independent_toy(5);
  toy.joint[0] = 0.0;
  EXPECT_THROW(verify_proposition1(toy), DegenerateInputError);

  DiscreteToy certain = make_independent_toy(6);
  certain.q(0, 0) = 1.0;
  EXPECT_THROW(verify_proposition1(certain), DegenerateInputError);
}

TEST(Prop1, MalformedToyThrows) {
  DiscreteToy toy;
  toy.num_g = 1;
  toy.num_s = toy.num_t = 2;
  toy.joint.assign(4, 0.25);
  toy.q = MatX::Constant(1, 2, 0.5);
  EXPECT_THROW(verify_proposition1(toy), std::invalid_argument);
}

}  // namespace
}  // namespace negrasp
