// Copyright 2026 The regsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "instances.hpp"
#include "regsim/supersim.hpp"

namespace regsim {
namespace {

using oracle::Vec;
using testing::vec;
using testing::values_of;

TEST(Recurrence, StartsAtOneOne) {
  const LabelGrowth same = [](const ComplexityLabel& l) { return l; };
  const auto s = recurrence_bound(same, 0.1, 0, RecurrenceMode::kExpanding);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], (ComplexityLabel{1, 1}));
}

TEST(Recurrence, OneExpandingRound) {
  const LabelGrowth same = [](const ComplexityLabel& l) { return l; };
  const auto s = recurrence_bound(same, 0.4, 1, RecurrenceMode::kExpanding);
  ASSERT_EQ(s.size(), 2u);
  // ε' = 2^-14 is the dyadic floor of 0.4^10, so the rounding charge is 14².
  EXPECT_EQ(recurrence_log_term(0.4), 196u);
  EXPECT_EQ(s[1], (ComplexityLabel{2, 198}));
}

TEST(Recurrence, SaturatesInsteadOfWrapping) {
  const LabelGrowth square = [](const ComplexityLabel& l) { return l.scaled(l.s1 + l.s2); };
  const auto s = recurrence_bound(square, 0.1, 12, RecurrenceMode::kShrinking);
  EXPECT_TRUE(s.back().saturated);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_TRUE(s[i - 1].leq(s[i]));
}

TEST(Expanding, HalfTargetStaysAtLevelZero) {
  oracle::Gen gen(31);
  const GradedLadder ladder = testing::random_ladder(gen, 4, 3, 2);
  const auto r = supersimulator_expanding(BoundedFn::constant(4, 0.5), Distribution::uniform(4),
                                          ladder, GrowthMap::shift(1), 0.1);
  EXPECT_EQ(r.level, 0u);
  EXPECT_EQ(r.fooled_level, 1u);
  EXPECT_EQ(r.trace.updates, 0u);
  EXPECT_EQ(vec(r.predictor), Vec(4, 0.5));
}

TEST(Expanding, IndicatorLadderFoolsTheLevelAbove) {
  // The three-level ladder is padded by one repeat of the top level: with
  // uses-based levels the run reaches level 2 and needs G(2) = 3 to exist.
  const GradedLadder ladder = testing::indicator_ladder(1);
  const Vec g{1, 0};
  const Vec d{0.5, 0.5};
  const auto r = supersimulator_expanding(BoundedFn(g), Distribution(d), ladder,
                                          GrowthMap::shift(1), 0.1);
  EXPECT_LE(r.trace.updates, 8u);
  EXPECT_EQ(r.fooled_level, r.level + 1);
  EXPECT_LE(oracle::multiaccuracy_error(values_of(ladder[r.fooled_level]), g,
                                        vec(r.predictor), d),
            0.1 + kDerivedTol);
  EXPECT_LE(r.level, r.bound_level);
}

TEST(Expanding, UnpaddedIndicatorLadderRunsOutOfLevels) {
  const GradedLadder ladder = testing::indicator_ladder(0);
  EXPECT_THROW(supersimulator_expanding(BoundedFn({1, 0}), Distribution::uniform(2), ladder,
                                        GrowthMap::shift(1), 0.1),
               LadderExhausted);
}

TEST(Expanding, IdentityGrowthOnOneLevelIsPlainBoosting) {
  oracle::Gen gen(32);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + gen.below(10);
    const Family fam = testing::random_family(gen, n, 6);
    const GradedLadder ladder({fam});
    const BoundedFn g(gen.function(n));
    const Distribution d(gen.distribution(n));
    const auto r = supersimulator_expanding(g, d, ladder, GrowthMap::identity(), 0.1);
    BoostParams p;
    p.epsilon = 0.1;
    const auto b = multiaccuracy_boost(g, d, fam, p);
    EXPECT_EQ(vec(r.predictor), vec(b.predictor));
    ASSERT_EQ(r.trace.iterations.size(), b.trace.iterations.size());
    for (std::size_t i = 0; i < b.trace.iterations.size(); ++i) {
      EXPECT_EQ(r.trace.iterations[i].member, b.trace.iterations[i].member);
      EXPECT_EQ(r.trace.iterations[i].digest, b.trace.iterations[i].digest);
    }
  }
}

TEST(Expanding, RandomLaddersStayRegularAboveTheirLevel) {
  oracle::Gen gen(33);
  for (int t = 0; t < 60; ++t) {
    const std::size_t n = 2 + gen.below(20);
    const double eps = std::vector<double>{0.1, 0.2, 0.3}[t % 3];
    const std::size_t shift = 1 + t % 2;
    const std::size_t bound = static_cast<std::size_t>(1.0 / (3 * eps * eps));
    const GradedLadder ladder = testing::random_ladder(gen, n, bound + shift + 2, 2);
    const Vec g = gen.function(n);
    const Vec d = gen.distribution(n, true);
    const auto r = supersimulator_expanding(BoundedFn(g), Distribution(d), ladder,
                                            GrowthMap::shift(shift), eps);
    EXPECT_EQ(r.fooled_level, r.level + shift);
    EXPECT_LE(oracle::multiaccuracy_error(values_of(ladder[r.fooled_level]), g,
                                          vec(r.predictor), d),
              eps + kDerivedTol);
    EXPECT_LE(r.trace.updates, static_cast<std::size_t>(std::ceil(1.0 / (3 * eps * eps))));
    EXPECT_LE(r.level, r.bound_level);
    for (const auto& it : r.trace.iterations) {
      EXPECT_GE(it.phi_before - it.phi_after, 0.75 * eps * eps - kDerivedTol);
      EXPECT_GE(it.phi_after, 0.0);
      EXPECT_LE(it.phi_after, 1.0);
    }
  }
}

TEST(Shrinking, ConstantGridTargetGivesIdenticalPair) {
  oracle::Gen gen(34);
  const GradedLadder ladder = testing::random_ladder(gen, 5, 6, 2);
  // h_0 = 1/2 already equals this target.
  const auto half = supersimulator_shrinking(BoundedFn::constant(5, 0.5), Distribution::uniform(5),
                                             ladder, GrowthMap::shift(1),
                                             ErrorSchedule::constant(0.125), 0.2);
  EXPECT_EQ(half.round, 0u);
  EXPECT_EQ(vec(half.h), Vec(5, 0.5));
  EXPECT_EQ(vec(half.h_prime), Vec(5, 0.5));
  EXPECT_EQ(half.similarity, 0.0);

  // For c != 1/2 the pair (h_0, h_1) only qualifies when (c - 1/2)² <= α, so
  // with a smaller α the returned pair is (c, c).
  const auto quarter = supersimulator_shrinking(
      BoundedFn::constant(5, 0.25), Distribution::uniform(5), ladder, GrowthMap::shift(1),
      ErrorSchedule::constant(0.125), 0.05);
  EXPECT_EQ(quarter.round, 1u);
  EXPECT_EQ(vec(quarter.h), Vec(5, 0.25));
  EXPECT_EQ(vec(quarter.h_prime), Vec(5, 0.25));
  EXPECT_EQ(quarter.similarity, 0.0);
}

TEST(Shrinking, LargeAlphaStopsWithinTwoRounds) {
  oracle::Gen gen(35);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + gen.below(8);
    const GradedLadder ladder = testing::random_ladder(gen, n, 8, 2);
    const auto r = supersimulator_shrinking(BoundedFn(gen.function(n)),
                                            Distribution(gen.distribution(n)), ladder,
                                            GrowthMap::shift(1), ErrorSchedule::constant(0.1),
                                            0.499);
    EXPECT_LE(r.round, 1u);
    EXPECT_LE(r.gap, 0.499 + kDerivedTol);
  }
}

TEST(Shrinking, IdentitySimilarityAndCorollaryOnRandomInstances) {
  oracle::Gen gen(36);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + gen.below(12);
    const double alpha = std::vector<double>{0.05, 0.1, 0.2}[t % 3];
    const auto schedule = ErrorSchedule::geometric(0.2, 0.8, 12);
    const std::size_t rounds = static_cast<std::size_t>(std::ceil(1.0 / alpha)) + 2;
    const GradedLadder ladder = testing::random_ladder(gen, n, rounds + 2, 2);
    const Vec g = gen.function(n);
    const Vec d = gen.distribution(n, true);
    const auto r = supersimulator_shrinking(BoundedFn(g), Distribution(d), ladder,
                                            GrowthMap::shift(1), schedule, alpha);
    // Identity recomputed here from the two predictors.
    const Vec h = vec(r.h);
    const Vec hp = vec(r.h_prime);
    double sim = 0.0, cross = 0.0, phi = 0.0, phin = 0.0;
    for (std::size_t x = 0; x < n; ++x) {
      sim += d[x] * (h[x] - hp[x]) * (h[x] - hp[x]);
      cross += d[x] * (h[x] - hp[x]) * (g[x] - hp[x]);
      phi += d[x] * (g[x] - h[x]) * (g[x] - h[x]);
      phin += d[x] * (g[x] - hp[x]) * (g[x] - hp[x]);
    }
    EXPECT_NEAR(sim, phi - phin + 2 * cross, kDerivedTol);
    EXPECT_NEAR(sim, r.similarity, kDerivedTol);
    EXPECT_LE(std::abs(cross), 2 * r.eps_s + kDerivedTol);
    EXPECT_LE(sim, (phi - phin) + 4 * r.eps_s + kDerivedTol);
    EXPECT_LE(r.gap, alpha + kDerivedTol);
    EXPECT_LE(r.round, r.bound_index_loose);
    const auto c = corollary_check(BoundedFn(g), Distribution(d), r, ladder,
                                   GrowthMap::shift(1));
    EXPECT_TRUE(c.passed) << c.measured << " > " << c.bound;
  }
}

TEST(Corollary, EqualPairPassesAtItsOwnError) {
  const GradedLadder ladder = testing::indicator_ladder(3);
  const auto r = supersimulator_shrinking(BoundedFn::constant(2, 0.5), Distribution::uniform(2),
                                          ladder, GrowthMap::shift(1),
                                          ErrorSchedule::constant(0.1), 0.2);
  const auto c = corollary_check(BoundedFn::constant(2, 0.5), Distribution::uniform(2), r,
                                 ladder, GrowthMap::shift(1));
  EXPECT_EQ(c.beta, 0.0);
  EXPECT_TRUE(c.passed);
  EXPECT_LE(c.measured, r.eps_s);
}

}  // namespace
}  // namespace regsim
