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
#include "regsim/products.hpp"

namespace regsim {
namespace {

using oracle::Vec;
using testing::vec;

Vec weights(const Distribution& d) { return {d.weights().begin(), d.weights().end()}; }
Vec weights(const Measure& m) { return {m.weights().begin(), m.weights().end()}; }

Family one_and_ind1() {
  return Family({{BoundedFn::constant(2, 1.0), {1, 0}, "1"},
                 {BoundedFn::indicator(2, 1), {1, 0}, "ind1"}});
}

BoundedFn calibrated_predictor(const MixtureInstance& inst, const Family& fam, double eps,
                               double gamma) {
  BoostParams p;
  p.epsilon = eps;
  p.gamma = gamma;
  return calibrated_multiaccuracy(inst.g, inst.dx, fam, p).predictor;
}

void expect_vec_near(const Vec& a, const Vec& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Mixture, Examples) {
  const auto a = build_mixture(Distribution({1, 0}), Distribution({0, 1}), 0.5);
  EXPECT_EQ(weights(a.dx), (Vec{0.5, 0.5}));
  EXPECT_EQ(vec(a.g), (Vec{0, 1}));

  oracle::Gen gen(41);
  const Distribution d(gen.distribution(5));
  expect_vec_near(vec(build_mixture(d, d, 0.3).g), Vec(5, 0.3), kStructuralTol);

  const auto c = build_mixture(Distribution({0.5, 0.5}), Distribution({0, 1}), 0.1);
  expect_vec_near(weights(c.dx), Vec{0.45, 0.55}, kStructuralTol);
  expect_vec_near(vec(c.g), Vec{0, 2.0 / 11.0}, kStructuralTol);
}

TEST(Proxies, Examples) {
  oracle::Gen gen(42);
  const Distribution d0(gen.distribution(4));
  const Distribution d1(gen.distribution(4));
  const auto inst = build_mixture(d0, d1, 0.5);
  const auto exact = build_proxies(inst, inst.g, ProxyMode::kTwoProxy);
  EXPECT_NEAR(exact.p, 0.5, kStructuralTol);
  expect_vec_near(weights(exact.tilde1), weights(d1), kStructuralTol);
  expect_vec_near(weights(*exact.tilde0), weights(d0), kStructuralTol);

  const auto u = build_mixture(Distribution::uniform(2), Distribution::uniform(2), 0.5);
  const auto hand = build_proxies(u, BoundedFn({0.25, 0.75}), ProxyMode::kTwoProxy);
  EXPECT_NEAR(hand.p, 0.5, kStructuralTol);
  expect_vec_near(weights(hand.tilde1), Vec{0.25, 0.75}, kStructuralTol);
  expect_vec_near(weights(*hand.tilde0), Vec{0.75, 0.25}, kStructuralTol);

  const auto flat = build_proxies(inst, BoundedFn::constant(4, 0.5), ProxyMode::kTwoProxy);
  expect_vec_near(weights(flat.tilde1), weights(inst.dx), kStructuralTol);
  expect_vec_near(weights(*flat.tilde0), weights(inst.dx), kStructuralTol);

  const auto single = build_proxies(inst, inst.g, ProxyMode::kSingleProxy);
  EXPECT_FALSE(single.tilde0.has_value());
  EXPECT_THROW(build_proxies(inst, BoundedFn::constant(4, 0.0), ProxyMode::kTwoProxy),
               InvalidArgument);
}

TEST(Proxies, MarginalizeBackToTheMixture) {
  oracle::Gen gen(43);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + gen.below(10);
    const double prior = 0.05 + 0.9 * gen.uniform();
    const auto inst = build_mixture(Distribution(gen.distribution(n, true)),
                                    Distribution(gen.distribution(n, true)), prior);
    Vec h = gen.function(n);
    h[0] = 0.5;  // keeps E[h] strictly inside (0, 1)
    const auto pp = build_proxies(inst, BoundedFn(h), ProxyMode::kTwoProxy);
    for (std::size_t x = 0; x < n; ++x) {
      EXPECT_NEAR(pp.p * pp.tilde1[x] + (1 - pp.p) * (*pp.tilde0)[x], inst.dx[x], kStructuralTol);
    }
  }
}

TEST(ProductTest, Examples) {
  const BoundedFn h({0.25, 0.75});
  const auto one = ProductTest::balanced(h, 1);
  EXPECT_EQ(one.on_tuple(std::vector<std::size_t>{0}), 0.0);
  EXPECT_EQ(one.on_tuple(std::vector<std::size_t>{1}), 1.0);

  const auto two = ProductTest::balanced(h, 2);
  EXPECT_EQ(two.on_tuple(std::vector<std::size_t>{1, 1}), 1.0);
  EXPECT_EQ(two.on_tuple(std::vector<std::size_t>{0, 0}), 0.0);
  EXPECT_EQ(two.on_tuple(std::vector<std::size_t>{0, 1}), 0.0);  // 3/16 vs 3/16
  EXPECT_EQ(two.on_tuple(std::vector<std::size_t>{1, 0}), 0.0);

  const auto tilted = ProductTest::tilted(BoundedFn({0.0, 2.0 / 11.0}), 1, 0.1);
  EXPECT_EQ(tilted.on_tuple(std::vector<std::size_t>{0}), 0.0);
  EXPECT_EQ(tilted.on_tuple(std::vector<std::size_t>{1}), 1.0);
}

TEST(ProductTest, TabulatedFormIsSymmetricAndAgrees) {
  oracle::Gen gen(44);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + gen.below(4);
    const std::size_t k = 1 + gen.below(4);
    const BoundedFn h(gen.gridded(n, 4));
    const auto test = ProductTest::balanced(h, k);
    const TupleFn tab = test.tabulate();
    EXPECT_TRUE(tab.is_symmetric());
    const Vec p = gen.distribution(n);
    const double brute = oracle::kfold_expectation(
        [&](const oracle::Tuple& z) { return test.on_tuple(z); }, p, k);
    EXPECT_NEAR(kfold_expectation(test, p, k), brute, kStructuralTol);
    EXPECT_NEAR(kfold_expectation(tab, p, k), brute, kStructuralTol);
  }
}

// Advantage of the product test against the hat pair equals the positive
// part of hat1^k - hat0^k, i.e. the best any test can do.
TEST(ProductTest, OptimalAgainstHatMeasures) {
  oracle::Gen gen(45);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + gen.below(3);
    const std::size_t k = 1 + gen.below(4);
    const auto inst = build_mixture(Distribution(gen.distribution(n)),
                                    Distribution(gen.distribution(n)), 0.5);
    const BoundedFn h(gen.gridded(n, 8));
    if (expectation(h, inst.dx) <= 0.0 || expectation(h, inst.dx) >= 1.0) continue;
    const auto pp = build_proxies(inst, h, ProxyMode::kTwoProxy);
    const auto test = ProductTest::balanced(h, k);
    const Vec hat0 = weights(pp.hat0);
    const Vec hat1 = weights(pp.hat1);
    const double adv = kfold_expectation(test, hat1, k) - kfold_expectation(test, hat0, k);
    EXPECT_NEAR(adv, oracle::kfold_positive_part(hat1, hat0, k), kStructuralTol);
    EXPECT_NEAR(kfold_positive_part(hat1, hat0, k), oracle::kfold_positive_part(hat1, hat0, k),
                kStructuralTol);
    // With equal masses this is the total variation.
    if (std::abs(pp.hat0.total() - pp.hat1.total()) < kStructuralTol) {
      EXPECT_NEAR(adv, oracle::kfold_tv(hat1, hat0, k), kStructuralTol);
    }
  }
}

TEST(Hybrid, PerfectSimulatorHasZeroGaps) {
  oracle::Gen gen(46);
  const auto inst = build_mixture(Distribution(gen.distribution(3)),
                                  Distribution(gen.distribution(3)), 0.5);
  const auto pp = build_proxies(inst, inst.g, ProxyMode::kTwoProxy);
  const auto test = ProductTest::balanced(inst.g, 3);
  const auto r = hybrid_bound_check(test, inst.d1, pp.hat1, 0.0);
  for (double g : r.gaps) EXPECT_NEAR(g, 0.0, kStructuralTol);
  EXPECT_TRUE(r.passed);
}

TEST(Hybrid, GapsMatchBruteForceAndStayWithinTwiceCalibration) {
  oracle::Gen gen(47);
  for (int t = 0; t < 60; ++t) {
    const std::size_t k = 1 + t % 3;
    const auto inst = build_mixture(Distribution(gen.distribution(2)),
                                    Distribution(gen.distribution(2)), 0.5);
    const BoundedFn h = calibrated_predictor(inst, one_and_ind1(), 0.05, 0.02);
    if (expectation(h, inst.dx) <= 0.0 || expectation(h, inst.dx) >= 1.0) continue;
    const auto pp = build_proxies(inst, h, ProxyMode::kTwoProxy);
    const auto test = ProductTest::balanced(h, k);
    const double cal = calibration_error(inst.g, h, inst.dx);
    for (int b = 0; b < 2; ++b) {
      const Vec d = weights(b ? inst.d1 : inst.d0);
      const Vec hat = weights(b ? pp.hat1 : pp.hat0);
      const auto r = hybrid_bound_check(test, d, hat, 2 * cal);
      ASSERT_EQ(r.gaps.size(), k);
      auto f = [&](const oracle::Tuple& z) { return test.on_tuple(z); };
      for (std::size_t j = 0; j < k; ++j) {
        const double gap = std::abs(oracle::hybrid_expectation(f, d, hat, k, j + 1) -
                                    oracle::hybrid_expectation(f, d, hat, k, j));
        EXPECT_NEAR(r.gaps[j], gap, kStructuralTol);
        EXPECT_LE(gap, 2 * cal + kDerivedTol);
      }
    }
  }
}

TEST(VerifyBalanced, PerfectSimulatorHasNoSlack) {
  oracle::Gen gen(48);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + gen.below(3);
    const auto inst = build_mixture(Distribution(gen.distribution(n)),
                                    Distribution(gen.distribution(n)), 0.5);
    const Family fam = testing::random_family(gen, n, 4);
    const std::size_t k = 1 + gen.below(3);
    const auto rep = verify_balanced(inst, inst.g, fam, 0.0, 0.0, k);
    EXPECT_TRUE(rep.all_pass());
    EXPECT_NEAR(rep.find("indistinguishable_0")->lhs, 0.0, kStructuralTol);
    EXPECT_NEAR(rep.find("indistinguishable_1")->lhs, 0.0, kStructuralTol);
    EXPECT_NEAR(rep.advantage, oracle::kfold_tv(weights(inst.d0), weights(inst.d1), k),
                kStructuralTol);
  }
}

TEST(VerifyBalanced, IdenticalDistributions) {
  oracle::Gen gen(49);
  const Distribution d(gen.distribution(3));
  const auto inst = build_mixture(d, d, 0.5);
  const Family fam = testing::random_family(gen, 3, 3);
  const auto rep = verify_balanced(inst, calibrated_predictor(inst, fam, 0.05, 0.02), fam, 0.05,
                                   0.02, 3);
  EXPECT_TRUE(rep.all_pass());
  EXPECT_NEAR(rep.advantage, 0.0, kStructuralTol);
  EXPECT_NEAR(rep.proxy_kfold_tv, 0.0, kStructuralTol);
}

TEST(VerifyBalanced, DisjointSupportExample) {
  const auto inst = build_mixture(Distribution({1, 0}), Distribution({0, 1}), 0.5);
  const auto rep = verify_balanced(inst, calibrated_predictor(inst, one_and_ind1(), 0.05, 0.05),
                                   one_and_ind1(), 0.05, 0.05, 3);
  for (const auto& i : rep.inequalities) EXPECT_TRUE(i.pass) << i.name;
  EXPECT_LE(rep.advantage, rep.true_kfold_tv + kDerivedTol);
}

TEST(VerifyBalanced, RejectsUncalibratedPredictor) {
  const auto inst = build_mixture(Distribution({1, 0}), Distribution({0, 1}), 0.5);
  try {
    // Regular at 0.3 (errors 0 and 0.3) but calibration error 0.3.
    verify_balanced(inst, BoundedFn({0.6, 0.4}), one_and_ind1(), 0.3, 0.05, 2);
    FAIL();
  } catch (const HypothesisFailed& e) {
    EXPECT_NE(std::string(e.what()).find("calibration"), std::string::npos);
  }
}

TEST(VerifyTilted, Examples) {
  oracle::Gen gen(50);
  const auto inst = build_mixture(Distribution(gen.distribution(3)),
                                  Distribution(gen.distribution(3)), 0.2);
  const Family fam = testing::random_family(gen, 3, 3);
  const auto exact = verify_tilted(inst, inst.g, fam, 0.2, 0.0, 2);
  EXPECT_TRUE(exact.all_pass());
  EXPECT_NEAR(exact.find("indistinguishable_1")->lhs, 0.0, kStructuralTol);
  expect_vec_near(exact.tilde1, weights(inst.d1), kStructuralTol);

  const auto hand = build_mixture(Distribution({0.5, 0.5}), Distribution({0, 1}), 0.2);
  const auto rep = verify_tilted(hand, calibrated_predictor(hand, one_and_ind1(), 0.04, 0.01),
                                 one_and_ind1(), 0.2, 0.01, 2);
  for (const auto& i : rep.inequalities) EXPECT_TRUE(i.pass) << i.name;

  const Distribution d(gen.distribution(3));
  const auto same = build_mixture(d, d, 0.2);
  const auto flat = verify_tilted(same, calibrated_predictor(same, fam, 0.04, 0.01), fam, 0.2,
                                  0.01, 2);
  EXPECT_TRUE(flat.all_pass());
  EXPECT_NEAR(flat.advantage, 0.0, kStructuralTol);
}

TEST(Characterize, IdenticalDistributionsGiveZeroChain) {
  oracle::Gen gen(51);
  const Distribution d(gen.distribution(3));
  const auto rep = characterize(d, d, testing::random_family(gen, 3, 3), 0.2, 2,
                                ProxyMode::kTwoProxy);
  ASSERT_TRUE(rep.chain.has_value());
  EXPECT_TRUE(rep.all_pass());
  EXPECT_LE(rep.chain->lower_distance, 2 * 0.2);
  EXPECT_LE(rep.chain->middle, 2 * 0.2);
  EXPECT_LE(rep.chain->upper_distance, 2 * 0.2);
}

TEST(Characterize, DisjointSupportProxiesAreFarApart) {
  for (std::size_t k : {1u, 2u, 3u}) {
    const auto rep = characterize(Distribution({1, 0}), Distribution({0, 1}), one_and_ind1(), 0.2,
                                  k, ProxyMode::kTwoProxy);
    EXPECT_TRUE(rep.all_pass());
    EXPECT_GE(rep.chain->middle, 1.0 - static_cast<double>(k) * 0.2);
    EXPECT_FALSE(rep.chain->same_family);
    EXPECT_NE(rep.chain->lower.members.size(), rep.chain->upper.members.size());
  }
}

TEST(Characterize, SingleProxyUsesTheTrueLabelZeroSide) {
  const auto rep = characterize(Distribution({0.5, 0.5}), Distribution({0, 1}), one_and_ind1(),
                                0.3, 2, ProxyMode::kSingleProxy);
  ASSERT_TRUE(rep.tilde0.has_value());
  EXPECT_EQ(*rep.tilde0, (Vec{0.5, 0.5}));
  EXPECT_TRUE(rep.all_pass());
}

TEST(CharacterizeSuper, DisjointSupportUsesOneLevelOnBothSides) {
  const FiniteDomain dom = FiniteDomain::bits(1);
  const Family one({{BoundedFn::constant(2, 1.0), {1, 0}, "1"}});
  const Family coord = one.with(build_coordinate_family(dom).members());
  const Family top = compose_level(coord, 1, 1, std::vector{Combinator::negation()});
  const GradedLadder ladder({one, coord, top});
  const auto rep = characterize_super(Distribution({1, 0}), Distribution({0, 1}), ladder,
                                      GrowthMap::shift(1), 0.2, 3, ProxyMode::kTwoProxy);
  ASSERT_TRUE(rep.chain.has_value());
  EXPECT_TRUE(rep.chain->same_family);
  EXPECT_EQ(*rep.chain->fooled_level, *rep.chain->level + 1);
  EXPECT_TRUE(rep.find("chain_lower")->pass);
  EXPECT_TRUE(rep.find("chain_upper")->pass);
}

TEST(CharacterizeSuper, DegenerateGrowthIsFlagged) {
  const Family one({{BoundedFn::constant(2, 1.0), {1, 0}, "1"}});
  const Family coord = one.with(build_coordinate_family(FiniteDomain::bits(1)).members());
  const GradedLadder ladder({one, coord});
  const auto rep = characterize_super(Distribution({1, 0}), Distribution({0, 1}), ladder,
                                      GrowthMap::identity(), 0.2, 3, ProxyMode::kTwoProxy);
  ASSERT_TRUE(rep.chain->test_contained.has_value());
  EXPECT_FALSE(*rep.chain->test_contained);
  EXPECT_FALSE(rep.notes.empty());
}

}  // namespace
}  // namespace regsim
