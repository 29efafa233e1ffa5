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

#include <vector>

#include "oracles.hpp"
#include "regsim/distinguishers.hpp"

namespace regsim {
namespace {

using oracle::Vec;

Family family_of(const std::vector<Vec>& fs) {
  std::vector<Distinguisher> m;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    m.push_back({BoundedFn(fs[i]), {1, 0}, "f" + std::to_string(i)});
  }
  return Family(m);
}

std::vector<Vec> values_of(const Family& f) {
  std::vector<Vec> out;
  for (const auto& m : f) out.emplace_back(m.values.values().begin(), m.values.values().end());
  return out;
}

TEST(ComplexityLabel, LatticeOperations) {
  const ComplexityLabel a{2, 5};
  const ComplexityLabel b{3, 1};
  EXPECT_EQ(a + b, (ComplexityLabel{5, 6}));
  EXPECT_EQ(a.join(b), (ComplexityLabel{3, 5}));
  EXPECT_TRUE((ComplexityLabel{1, 1}).leq(a));
  EXPECT_FALSE(a.leq(b));
  EXPECT_EQ(a.scaled(3), (ComplexityLabel{6, 15}));
  const ComplexityLabel big{ComplexityLabel::kMax - 1, 0};
  EXPECT_TRUE((big + big).saturated);
  EXPECT_TRUE(big.scaled(4).saturated);
}

TEST(BestResponse, ZeroResidualGivesZero) {
  const BoundedFn g({0.3, 0.6, 0.9});
  const auto br = best_response(family_of({{1, 0, 1}, {0, 1, 1}}), g, g,
                                Distribution::uniform(3));
  EXPECT_EQ(br.correlation, 0.0);
}

TEST(BestResponse, Examples) {
  const Distribution u = Distribution::uniform(2);
  const BoundedFn half = BoundedFn::constant(2, 0.5);
  const auto br = best_response(family_of({{1, 1}, {0, 1}}), BoundedFn({1, 0}), half, u);
  EXPECT_EQ(br.index, 1u);
  EXPECT_EQ(br.sign, -1);
  EXPECT_NEAR(br.correlation, 0.25, kStructuralTol);

  const auto one = best_response(family_of({{1, 1}}), BoundedFn({1, 1}), half, u);
  EXPECT_EQ(one.index, 0u);
  EXPECT_EQ(one.sign, 1);
  EXPECT_NEAR(one.correlation, 0.5, kStructuralTol);
}

TEST(BestResponse, MatchesExhaustiveRescan) {
  oracle::Gen gen(11);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + gen.below(16);
    std::vector<Vec> fs;
    const std::size_t m = 1 + gen.below(20);
    for (std::size_t j = 0; j < m; ++j) fs.push_back(t % 2 ? gen.boolean(n) : gen.function(n));
    const Vec g = gen.function(n);
    const Vec h = gen.function(n);
    const Vec d = gen.distribution(n, true);
    const auto br = best_response(family_of(fs), BoundedFn(g), BoundedFn(h), Distribution(d));
    const auto ref = oracle::best_response(fs, g, h, d);
    EXPECT_EQ(br.correlation, ref.correlation);
    EXPECT_EQ(br.index, ref.index);
    EXPECT_EQ(br.sign, ref.sign);
  }
}

TEST(FamilyDistance, Examples) {
  const Vec p{0.5, 0.5};
  const Vec q{0.75, 0.25};
  EXPECT_EQ(family_distance(family_of({{0, 1}}), p, p).value, 0.0);
  EXPECT_NEAR(family_distance(family_of({{0, 1}}), p, q).value, 0.25, kStructuralTol);
  EXPECT_NEAR(family_distance(family_of({{0.5, 0.5}}), p, q).value, 0.0, kStructuralTol);
}

TEST(FamilyDistance, NeverExceedsTotalVariation) {
  oracle::Gen gen(12);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + gen.below(10);
    std::vector<Vec> fs;
    for (std::size_t j = 0; j < 1 + gen.below(8); ++j) fs.push_back(gen.function(n));
    const Vec p = gen.distribution(n, true);
    const Vec q = gen.distribution(n, true);
    EXPECT_LE(family_distance(family_of(fs), p, q).value, oracle::tv(p, q) + kStructuralTol);
  }
}

TEST(CoordinateFamily, BitOrder) {
  const Family one = build_coordinate_family(FiniteDomain::bits(1));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(values_of(one)[0], (Vec{0, 1}));

  const Family two = build_coordinate_family(FiniteDomain::bits(2));
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0][3], 1.0);
  EXPECT_EQ(two[1][3], 1.0);
  EXPECT_EQ(two[0][2], 1.0);  // high bit of 0b10
  EXPECT_EQ(two[1][2], 0.0);
  for (std::size_t x = 0; x < 4; ++x) {
    EXPECT_EQ(two[0][x], static_cast<double>(x >> 1));
    EXPECT_EQ(two[1][x], static_cast<double>(x & 1));
  }
  EXPECT_THROW(build_coordinate_family(FiniteDomain::make(4)), InvalidArgument);
}

TEST(ThresholdFamily, Examples) {
  const BoundedFn h({0.25, 0.75});
  const Family top = build_threshold_family(h, Vec{1.0});
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(values_of(top)[0], (Vec{0, 0}));
  EXPECT_EQ(values_of(build_threshold_family(h, Vec{0.5}))[0], (Vec{0, 1}));
  EXPECT_EQ(values_of(build_threshold_family(h, Vec{0.0}))[0], (Vec{1, 1}));
  EXPECT_THROW(build_threshold_family(h, Vec{0.5, 0.2}), InvalidArgument);
}

TEST(RectangleFamily, Enumeration) {
  const Family one = build_rectangle_family(1, 1);
  EXPECT_EQ(one.size(), 4u);
  EXPECT_TRUE(one.find(BoundedFn::constant(1, 1.0)).has_value());
  EXPECT_EQ(build_rectangle_family(2, 1).size(), 8u);
  EXPECT_EQ(build_rectangle_family(2, 2).size(), 16u);

  // Distinct functions of a 2x1 grid: empty, top, bottom, both.
  const Family tall = build_rectangle_family(2, 1);
  std::vector<Vec> distinct;
  for (const auto& v : values_of(tall)) {
    if (std::find(distinct.begin(), distinct.end(), v) == distinct.end()) distinct.push_back(v);
  }
  EXPECT_EQ(distinct.size(), 4u);
  EXPECT_THROW(build_rectangle_family(10, 10), CapExceeded);
}

TEST(ComposeLevel, Examples) {
  const Family base = family_of({{0, 1}});
  const Family same = compose_level(base, 1, 0, std::vector{Combinator::identity()});
  EXPECT_EQ(values_of(same), values_of(base));

  const Family neg = compose_level(base, 1, 1, std::vector{Combinator::negation()});
  ASSERT_EQ(neg.size(), 2u);
  EXPECT_EQ(values_of(neg)[1], (Vec{1, 0}));

  const Family pair = family_of({{1, 0}, {0, 1}});
  const Family mins = compose_level(pair, 2, 1, std::vector{Combinator::min()});
  EXPECT_TRUE(mins.find(BoundedFn::constant(2, 0.0)).has_value());
  EXPECT_EQ(mins.label(), (ComplexityLabel{2, 1}));
}

TEST(ComposeLevel, IdentityCatalogPreservesDistances) {
  oracle::Gen gen(13);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + gen.below(6);
    std::vector<Vec> fs;
    for (int j = 0; j < 4; ++j) fs.push_back(gen.function(n));
    const Family base = family_of(fs);
    const Family same = compose_level(base, 1, 3, std::vector{Combinator::identity()});
    const Vec p = gen.distribution(n);
    const Vec q = gen.distribution(n);
    EXPECT_EQ(family_distance(same, p, q).value, family_distance(base, p, q).value);
  }
}

TEST(Combinator, Parse) {
  EXPECT_EQ(Combinator::parse("and").gates, 3u);
  const Combinator c = Combinator::parse("affine:2:-0.5");
  EXPECT_DOUBLE_EQ(c(0.5, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(c(0.1, 0.0), 0.0);
  EXPECT_THROW(Combinator::parse("xor"), InvalidArgument);
}

GradedLadder random_ladder(oracle::Gen& gen, std::size_t n, std::size_t depth) {
  std::vector<Family> levels;
  std::vector<Vec> acc;
  for (std::size_t i = 0; i < depth; ++i) {
    acc.push_back(gen.function(n));
    levels.push_back(family_of(acc));
  }
  return GradedLadder(levels);
}

TEST(GradedLadder, CorrelationNondecreasingInLevel) {
  oracle::Gen gen(14);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + gen.below(8);
    const GradedLadder ladder = random_ladder(gen, n, 5);
    const BoundedFn g(gen.function(n));
    const BoundedFn h(gen.function(n));
    const Distribution d(gen.distribution(n));
    double prev = -1.0;
    for (std::size_t i = 0; i < ladder.depth(); ++i) {
      const double c = best_response(ladder[i], g, h, d).correlation;
      EXPECT_GE(c, prev);
      prev = c;
    }
  }
}

TEST(GradedLadder, NestingViolationNamesFirstPair) {
  const Family a = family_of({{1, 0}});
  const Family b = family_of({{0, 1}});
  const auto why = GradedLadder::nesting_violation({a, a.with(b.members()), b},
                                                   {a.label(), a.label(), b.label()});
  ASSERT_TRUE(why.has_value());
  EXPECT_NE(why->find("level 1 is not contained in level 2"), std::string::npos);
  EXPECT_THROW(GradedLadder({b, a}), InvalidArgument);
}

TEST(GradedLadder, FirstLevel) {
  const Family a = family_of({{1, 0}});
  const Family ab = a.with(family_of({{0, 1}}).members());
  const GradedLadder ladder({a, ab, ab});
  EXPECT_EQ(ladder.first_level(2, 0), 0u);
  EXPECT_EQ(ladder.first_level(2, 1), 1u);
}

TEST(GrowthMap, Examples) {
  oracle::Gen gen(15);
  const GradedLadder ladder = random_ladder(gen, 3, 5);
  EXPECT_EQ(apply_growth(GrowthMap::identity(), 2, ladder), 2u);
  EXPECT_EQ(apply_growth(GrowthMap::shift(1), 3, ladder), 4u);
  EXPECT_THROW(apply_growth(GrowthMap::shift(1), 4, ladder), LadderExhausted);
  EXPECT_EQ(GrowthMap::table({1, 2, 2}).map(1), 2u);
  EXPECT_THROW(GrowthMap::table({0, 0}), InvalidArgument);  // not inflationary
  EXPECT_THROW(GrowthMap::table({2, 1, 2}), InvalidArgument);
}

TEST(ErrorSchedule, Validation) {
  EXPECT_DOUBLE_EQ(ErrorSchedule::geometric(0.2, 0.5, 3).at(7), 0.05);
  EXPECT_THROW(ErrorSchedule::constant(0.5), InvalidArgument);
  EXPECT_THROW(ErrorSchedule::explicit_values({0.1, 0.2}), InvalidArgument);
}

}  // namespace
}  // namespace regsim
