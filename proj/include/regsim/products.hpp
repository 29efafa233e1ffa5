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

// Indistinguishability of k-fold products through Bayes proxies.
//
// A pair (D0, D1) is folded into one labelled distribution: x ~ D_X with
// Pr[y = 1 | x] = g(x). A simulator h of g then yields proxy distributions
// (the posteriors of x given a simulated label) that F cannot tell from the
// originals, and a product threshold test built from h whose advantage on
// the k-fold originals tracks the total variation of the k-fold proxies.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regsim/core.hpp"
#include "regsim/distinguishers.hpp"
#include "regsim/regularity.hpp"
#include "regsim/supersim.hpp"

namespace regsim {

struct MixtureInstance {
  Distribution d0;
  Distribution d1;
  double prior = 0.5;
  Distribution dx;
  BoundedFn g;
};

// D_X = (1 - prior) D0 + prior D1 and g = prior D1 / D_X, with g = prior
// wherever D_X vanishes.
inline MixtureInstance build_mixture(const Distribution& d0, const Distribution& d1,
                                     double prior) {
  if (!(prior > 0.0 && prior < 1.0)) throw InvalidArgument("prior must lie in (0, 1)");
  detail::require_same_size("build_mixture", d0.size(), d1.size());
  std::vector<double> dx(d0.size());
  std::vector<double> g(d0.size());
  for (std::size_t x = 0; x < d0.size(); ++x) {
    dx[x] = (1.0 - prior) * d0[x] + prior * d1[x];
    g[x] = dx[x] > 0.0 ? std::min(1.0, prior * d1[x] / dx[x]) : prior;
  }
  return {d0, d1, prior, Distribution(std::move(dx)), BoundedFn(std::move(g))};
}

enum class ProxyMode { kTwoProxy, kSingleProxy };

struct ProxyPair {
  double p = 0.0;  // Pr[simulated label = 1] = E_{D_X}[h]
  double prior = 0.5;
  std::optional<Distribution> tilde0;  // absent in single-proxy mode
  Distribution tilde1;
  Measure hat0;  // (1 - h) D_X / (1 - prior)
  Measure hat1;  // h D_X / prior
};

inline ProxyPair build_proxies(const MixtureInstance& inst, const BoundedFn& h,
                               ProxyMode mode = ProxyMode::kTwoProxy) {
  detail::require_same_size("build_proxies", h.size(), inst.dx.size());
  ProxyPair pp;
  pp.prior = inst.prior;
  pp.p = expectation(h, inst.dx);
  if (!(pp.p > 0.0)) throw InvalidArgument("proxy undefined: E[h] = 0 (h vanishes on D_X)");
  if (mode == ProxyMode::kTwoProxy && !(pp.p < 1.0)) {
    throw InvalidArgument("proxy undefined: E[h] = 1 (h is 1 on D_X)");
  }
  const std::size_t n = h.size();
  std::vector<double> t1(n), t0(n), m1(n), m0(n);
  for (std::size_t x = 0; x < n; ++x) {
    t1[x] = h[x] * inst.dx[x] / pp.p;
    m1[x] = h[x] * inst.dx[x] / inst.prior;
    m0[x] = (1.0 - h[x]) * inst.dx[x] / (1.0 - inst.prior);
    if (mode == ProxyMode::kTwoProxy) t0[x] = (1.0 - h[x]) * inst.dx[x] / (1.0 - pp.p);
  }
  pp.tilde1 = Distribution::normalize(std::move(t1));
  if (mode == ProxyMode::kTwoProxy) pp.tilde0 = Distribution::normalize(std::move(t0));
  pp.hat1 = Measure(std::move(m1));
  pp.hat0 = Measure(std::move(m0));
  return pp;
}

// The product threshold test on X^k. Balanced: accept iff
// prod h(z_i) > prod (1 - h(z_i)). Tilted: accept iff prod h(z_i) > eps^k.
// Decisions use log-space sums grouped by the distinct values of h, so the
// test is exactly symmetric and depends on z only through h. Ties (equal
// sides up to a 1e-12 relative tolerance) reject.
class ProductTest {
 public:
  enum class Variant { kBalanced, kTilted };

  static ProductTest balanced(const BoundedFn& h, std::size_t k) {
    return ProductTest(h, k, Variant::kBalanced, 0.0);
  }

  static ProductTest tilted(const BoundedFn& h, std::size_t k, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("tilted test needs eps in (0, 1)");
    return ProductTest(h, k, Variant::kTilted, eps);
  }

  std::size_t k() const noexcept { return k_; }
  std::size_t domain_size() const noexcept { return level_of_.size(); }
  Variant variant() const noexcept { return variant_; }

  // -1 reject, 0 tie, +1 accept, on a count vector over domain elements.
  int compare(std::span<const std::uint32_t> counts) const {
    std::vector<std::uint64_t> per_level(levels_.size(), 0);
    std::uint64_t total = 0;
    for (std::size_t x = 0; x < counts.size(); ++x) {
      per_level[level_of_[x]] += counts[x];
      total += counts[x];
    }
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    double a = 0.0;
    double b = 0.0;
    for (std::size_t v = 0; v < levels_.size(); ++v) {
      const auto n = per_level[v];
      if (n == 0) continue;
      a = (log_h_[v] == kNegInf) ? kNegInf : a + static_cast<double>(n) * log_h_[v];
      if (variant_ == Variant::kBalanced) {
        b = (log_1mh_[v] == kNegInf) ? kNegInf : b + static_cast<double>(n) * log_1mh_[v];
      }
      if (a == kNegInf && variant_ == Variant::kTilted) break;
    }
    if (variant_ == Variant::kTilted) b = static_cast<double>(total) * std::log(eps_);
    if (a == kNegInf && b == kNegInf) return 0;
    if (a == kNegInf) return -1;
    if (b == kNegInf) return 1;
    const double tol = 1e-12 * std::max({1.0, std::abs(a), std::abs(b)});
    if (std::abs(a - b) <= tol) return 0;
    return a > b ? 1 : -1;
  }

  double operator()(std::span<const std::uint32_t> counts) const {
    return compare(counts) > 0 ? 1.0 : 0.0;
  }

  double on_tuple(std::span<const std::size_t> z) const {
    std::vector<std::uint32_t> counts(domain_size(), 0);
    for (std::size_t x : z) ++counts[x];
    return (*this)(counts);
  }

  TupleFn tabulate(std::size_t cap = kDefaultTupleCap) const {
    return TupleFn::tabulate(
        domain_size(), k_, [&](std::span<const std::size_t> z) { return on_tuple(z); },
        variant_ == Variant::kBalanced ? "product-test" : "tilted-product-test", cap);
  }

 private:
  ProductTest(const BoundedFn& h, std::size_t k, Variant v, double eps)
      : k_(k), variant_(v), eps_(eps) {
    if (k == 0) throw InvalidArgument("k must be >= 1");
    std::map<double, std::size_t> index;
    for (std::size_t x = 0; x < h.size(); ++x) index.emplace(h[x], 0);
    for (auto& [val, i] : index) {
      i = levels_.size();
      levels_.push_back(val);
      log_h_.push_back(std::log(val));
      log_1mh_.push_back(std::log1p(-val));
    }
    for (std::size_t x = 0; x < h.size(); ++x) level_of_.push_back(index[h[x]]);
  }

  std::size_t k_;
  Variant variant_;
  double eps_;
  std::vector<double> levels_;
  std::vector<double> log_h_;
  std::vector<double> log_1mh_;
  std::vector<std::size_t> level_of_;
};

// Probability mass of tuples on which the test ties.
inline double tie_mass(const ProductTest& t, std::span<const double> p) {
  return kfold_expectation(
      [&](std::span<const std::uint32_t> c) { return t.compare(c) == 0 ? 1.0 : 0.0; }, p,
      t.k());
}

// |E_{P^k}[T] - E_{Q^k}[T]|.
inline double advantage(const ProductTest& t, std::span<const double> p,
                        std::span<const double> q) {
  return std::abs(kfold_expectation(t, p, t.k()) - kfold_expectation(t, q, t.k()));
}

// Σ_z (P^k(z) - Q^k(z))_+, the best one-sided advantage any test on X^k has
// for measures P, Q (which may have different total mass).
inline double kfold_positive_part(std::span<const double> p, std::span<const double> q,
                                  std::size_t k,
                                  std::size_t cap = kDefaultTypeClassCap) {
  detail::require_same_size("kfold_positive_part", p.size(), q.size());
  detail::check_type_class_cap(p.size(), k, cap);
  double s = 0.0;
  detail::for_each_composition(p.size(), k, [&](std::span<const std::uint32_t> c) {
    const double mw = multinomial(c);
    s += std::max(0.0, detail::type_mass(c, p, mw) - detail::type_mass(c, q, mw));
  });
  return s;
}

struct HybridReport {
  std::vector<double> gaps;    // |E_{H_j}[T] - E_{H_{j+1}}[T]|, H_j = D^j ⊗ hat^(k-j)
  std::vector<double> bounds;  // per-step bound
  double max_gap = 0.0;
  bool passed = true;
};

// Walks from hat^k to D^k one coordinate at a time. Each swap changes the
// test's expectation by at most step_slack times the mass of the remaining
// hat coordinates (slack = calibration error / prior for the proxies here).
inline HybridReport hybrid_bound_check(const ProductTest& t, std::span<const double> d,
                                       std::span<const double> hat, double step_slack,
                                       std::size_t cap = kDefaultTupleCap) {
  detail::require_same_size("hybrid_bound_check", d.size(), hat.size());
  detail::require_same_size("hybrid_bound_check", t.domain_size(), d.size());
  const std::size_t k = t.k();
  double hat_mass = 0.0;
  for (double w : hat) hat_mass += w;
  auto hybrid = [&](std::size_t j) {
    std::vector<std::span<const double>> factors;
    for (std::size_t i = 0; i < k; ++i) factors.push_back(i < j ? d : hat);
    return product_expectation([&](std::span<const std::size_t> z) { return t.on_tuple(z); },
                               std::span<const std::span<const double>>(factors), cap);
  };
  HybridReport r;
  double prev = hybrid(0);
  for (std::size_t j = 0; j < k; ++j) {
    const double next = hybrid(j + 1);
    const double gap = std::abs(next - prev);
    const double bound =
        step_slack * std::pow(std::max(1.0, hat_mass), static_cast<double>(k - j - 1));
    r.gaps.push_back(gap);
    r.bounds.push_back(bound);
    r.max_gap = std::max(r.max_gap, gap);
    if (gap > bound + kDerivedTol) r.passed = false;
    prev = next;
  }
  return r;
}

struct Inequality {
  std::string name;
  std::string relation;  // "<=" or ">="
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // the additive slack term already folded into rhs
  bool pass = false;

  static Inequality le(std::string name, double lhs, double rhs, double slack) {
    return {std::move(name), "<=", lhs, rhs, slack, lhs <= rhs + kDerivedTol};
  }
  static Inequality ge(std::string name, double lhs, double rhs, double slack) {
    return {std::move(name), ">=", lhs, rhs, slack, lhs + kDerivedTol >= rhs};
  }
};

// A distinguisher family on X^k.
struct TupleFamily {
  std::string name;
  std::vector<TupleFn> members;
};

struct ChainReport {
  TupleFamily lower;
  TupleFamily upper;
  bool same_family = false;
  double lower_distance = 0.0;
  std::size_t lower_witness = 0;
  double upper_distance = 0.0;
  std::size_t upper_witness = 0;
  double middle = 0.0;  // kfold_tv of the proxies
  std::optional<std::size_t> level;
  std::optional<std::size_t> fooled_level;
  std::optional<ComplexityLabel> level_label;
  std::optional<ComplexityLabel> fooled_label;
  std::optional<bool> test_contained;  // fooled label covers the test's cost
  std::optional<std::size_t> bound_level;
};

struct CharacterizationReport {
  std::string kind;
  ProxyMode mode = ProxyMode::kTwoProxy;
  std::size_t k = 1;
  double epsilon = 0.0;      // target slack
  double eps_regular = 0.0;  // regularity level the simulator was audited at
  double gamma = 0.0;
  double prior = 0.5;
  double p = 0.0;
  double multiaccuracy_error = 0.0;
  double calibration_error = 0.0;
  std::vector<double> h;
  std::optional<std::vector<double>> tilde0;
  std::vector<double> tilde1;
  std::vector<double> hat0;
  std::vector<double> hat1;
  double proxy_kfold_tv = 0.0;
  double advantage = 0.0;
  double true_kfold_tv = 0.0;
  double tie_mass0 = 0.0;
  double tie_mass1 = 0.0;
  std::vector<HybridReport> hybrids;
  std::vector<Inequality> inequalities;
  std::optional<ChainReport> chain;
  std::optional<BoostTrace> trace;
  std::vector<std::string> notes;

  bool all_pass() const {
    return std::all_of(inequalities.begin(), inequalities.end(),
                       [](const Inequality& i) { return i.pass; });
  }

  const Inequality* find(const std::string& name) const {
    for (const auto& i : inequalities) {
      if (i.name == name) return &i;
    }
    return nullptr;
  }
};

namespace detail {

inline std::vector<double> to_vec(std::span<const double> s) {
  return std::vector<double>(s.begin(), s.end());
}

inline void require_hypotheses(const BoundedFn& g, const BoundedFn& h,
                               const Distribution& dx, const Family& fam,
                               double reg_eps, double gamma,
                               CharacterizationReport& rep) {
  rep.multiaccuracy_error = best_response(fam, g, h, dx).correlation;
  rep.calibration_error = calibration_error(g, h, dx);
  if (rep.multiaccuracy_error > reg_eps + kDerivedTol) {
    throw HypothesisFailed("regularity audit failed: multiaccuracy error " +
                           std::to_string(rep.multiaccuracy_error) + " exceeds " +
                           std::to_string(reg_eps));
  }
  if (rep.calibration_error > gamma + kDerivedTol) {
    throw HypothesisFailed("calibration audit failed: calibration error " +
                           std::to_string(rep.calibration_error) + " exceeds gamma " +
                           std::to_string(gamma));
  }
}

inline void add_hybrid_steps(CharacterizationReport& rep, const HybridReport& hr,
                             const std::string& prefix) {
  for (std::size_t j = 0; j < hr.gaps.size(); ++j) {
    rep.inequalities.push_back(Inequality::le(prefix + "_step" + std::to_string(j),
                                              hr.gaps[j], hr.bounds[j], hr.bounds[j]));
  }
}

inline bool hybrid_feasible(std::size_t n, std::size_t k) {
  try {
    TupleFn::tuple_count(n, k, kDefaultTupleCap);
    return true;
  } catch (const CapExceeded&) {
    return false;
  }
}

}  // namespace detail

// Balanced-prior verification: h must be (F, eps)-regular and
// gamma-calibrated for g under D_X. Checks proxy indistinguishability
// (2ε + 5γ), the product test's advantage against the k-fold proxy distance
// (slack 14kγ), and the intermediate facts behind both.
inline CharacterizationReport verify_balanced(const MixtureInstance& inst,
                                              const BoundedFn& h, const Family& fam,
                                              double eps, double gamma, std::size_t k) {
  if (std::abs(inst.prior - 0.5) > kStructuralTol) {
    throw InvalidArgument("balanced verification needs prior 1/2");
  }
  if (!(gamma >= 0.0 && gamma < 0.1)) throw InvalidArgument("gamma must lie in [0, 0.1)");
  if (!(eps >= 0.0)) throw InvalidArgument("epsilon must be nonnegative");
  if (k == 0) throw InvalidArgument("k must be >= 1");
  CharacterizationReport rep;
  rep.kind = "balanced";
  rep.k = k;
  rep.epsilon = eps;
  rep.eps_regular = eps;
  rep.gamma = gamma;
  rep.prior = inst.prior;
  detail::require_hypotheses(inst.g, h, inst.dx, fam, eps, gamma, rep);

  const ProxyPair pp = build_proxies(inst, h, ProxyMode::kTwoProxy);
  rep.p = pp.p;
  rep.h = detail::to_vec(h.values());
  rep.tilde0 = detail::to_vec(pp.tilde0->weights());
  rep.tilde1 = detail::to_vec(pp.tilde1.weights());
  rep.hat0 = detail::to_vec(pp.hat0.weights());
  rep.hat1 = detail::to_vec(pp.hat1.weights());

  const double kd = static_cast<double>(k);
  const auto& t0 = *pp.tilde0;
  const auto& t1 = pp.tilde1;

  // Structural identities of the balanced mixture.
  double dev = 0.0;
  for (std::size_t x = 0; x < inst.dx.size(); ++x) {
    dev = std::max(dev, std::abs(inst.d1[x] - 2.0 * inst.g[x] * inst.dx[x]));
    dev = std::max(dev, std::abs(inst.d0[x] - 2.0 * (1.0 - inst.g[x]) * inst.dx[x]));
  }
  rep.inequalities.push_back(Inequality::le("mixture_identity", dev, kStructuralTol, 0.0));
  rep.inequalities.push_back(
      Inequality::le("inverse_prior", std::abs(1.0 / pp.p - 2.0), 5.0 * gamma, 5.0 * gamma));

  // Intermediate facts.
  rep.inequalities.push_back(
      Inequality::le("family_hat0", family_distance(fam, inst.d0, pp.hat0).value, 2.0 * eps, 2.0 * eps));
  rep.inequalities.push_back(
      Inequality::le("family_hat1", family_distance(fam, inst.d1, pp.hat1).value, 2.0 * eps, 2.0 * eps));
  rep.inequalities.push_back(Inequality::le("tv_hat0", tv_distance(t0, pp.hat0), 5.0 * gamma, 5.0 * gamma));
  rep.inequalities.push_back(Inequality::le("tv_hat1", tv_distance(t1, pp.hat1), 5.0 * gamma, 5.0 * gamma));

  // Proxy indistinguishability.
  const double margin = 2.0 * eps + 5.0 * gamma;
  rep.inequalities.push_back(
      Inequality::le("indistinguishable_0", family_distance(fam, inst.d0, t0).value, margin, margin));
  rep.inequalities.push_back(
      Inequality::le("indistinguishable_1", family_distance(fam, inst.d1, t1).value, margin, margin));

  // Product test.
  const ProductTest test = ProductTest::balanced(h, k);
  rep.advantage = advantage(test, inst.d0, inst.d1);
  rep.proxy_kfold_tv = kfold_tv(t0, t1, k);
  rep.true_kfold_tv = kfold_tv(inst.d0, inst.d1, k);
  rep.tie_mass0 = tie_mass(test, inst.d0);
  rep.tie_mass1 = tie_mass(test, inst.d1);
  rep.inequalities.push_back(Inequality::ge("advantage", rep.advantage,
                                            rep.proxy_kfold_tv - 14.0 * kd * gamma,
                                            14.0 * kd * gamma));
  rep.inequalities.push_back(
      Inequality::le("data_processing", rep.advantage, rep.true_kfold_tv, 0.0));

  if (detail::hybrid_feasible(h.size(), k)) {
    const double step = rep.calibration_error / inst.prior;
    rep.hybrids.push_back(hybrid_bound_check(test, inst.d0, pp.hat0, step));
    rep.hybrids.push_back(hybrid_bound_check(test, inst.d1, pp.hat1, step));
    detail::add_hybrid_steps(rep, rep.hybrids[0], "hybrid_0");
    detail::add_hybrid_steps(rep, rep.hybrids[1], "hybrid_1");
  } else {
    rep.notes.push_back("hybrid check skipped: N^k exceeds the brute-force cap");
  }
  return rep;
}

// Tilted-prior verification (prior = eps): h must be (F, ε²)-regular and
// gamma-calibrated with gamma < eps/2. Only the label-1 proxy is formed;
// the label-0 side is D0 itself.
inline CharacterizationReport verify_tilted(const MixtureInstance& inst,
                                            const BoundedFn& h, const Family& fam,
                                            double eps, double gamma, std::size_t k) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  if (std::abs(inst.prior - eps) > kStructuralTol) {
    throw InvalidArgument("tilted verification needs prior equal to epsilon");
  }
  if (!(gamma >= 0.0 && gamma < eps / 2.0)) throw InvalidArgument("gamma must lie in [0, epsilon/2)");
  if (k == 0) throw InvalidArgument("k must be >= 1");
  CharacterizationReport rep;
  rep.kind = "tilted";
  rep.mode = ProxyMode::kSingleProxy;
  rep.k = k;
  rep.epsilon = eps;
  rep.eps_regular = eps * eps;
  rep.gamma = gamma;
  rep.prior = inst.prior;
  detail::require_hypotheses(inst.g, h, inst.dx, fam, eps * eps, gamma, rep);

  const ProxyPair pp = build_proxies(inst, h, ProxyMode::kSingleProxy);
  rep.p = pp.p;
  rep.h = detail::to_vec(h.values());
  rep.tilde1 = detail::to_vec(pp.tilde1.weights());
  rep.hat0 = detail::to_vec(pp.hat0.weights());
  rep.hat1 = detail::to_vec(pp.hat1.weights());

  const double kd = static_cast<double>(k);
  const double e2 = eps * eps;
  rep.inequalities.push_back(Inequality::le("prior_estimate", std::abs(pp.p - eps), gamma, gamma));
  rep.inequalities.push_back(
      Inequality::le("family_hat1", family_distance(fam, inst.d1, pp.hat1).value, eps, eps));
  rep.inequalities.push_back(
      Inequality::le("tv_hat1", tv_distance(pp.tilde1, pp.hat1), 2.0 * gamma / e2, 2.0 * gamma / e2));
  const double margin = eps + 2.0 * gamma / e2;
  rep.inequalities.push_back(Inequality::le(
      "indistinguishable_1", family_distance(fam, inst.d1, pp.tilde1).value, margin, margin));

  const ProductTest test = ProductTest::tilted(h, k, eps);
  rep.advantage = advantage(test, inst.d0, inst.d1);
  rep.proxy_kfold_tv = kfold_tv(inst.d0, pp.tilde1, k);
  rep.true_kfold_tv = kfold_tv(inst.d0, inst.d1, k);
  rep.tie_mass0 = tie_mass(test, inst.d0);
  rep.tie_mass1 = tie_mass(test, inst.d1);
  const double slack = (2.0 * gamma / e2 + gamma / eps + eps) * kd;
  rep.inequalities.push_back(
      Inequality::ge("advantage", rep.advantage, rep.proxy_kfold_tv - slack, slack));
  rep.inequalities.push_back(
      Inequality::le("data_processing", rep.advantage, rep.true_kfold_tv, 0.0));

  if (detail::hybrid_feasible(h.size(), k)) {
    rep.hybrids.push_back(
        hybrid_bound_check(test, inst.d1, pp.hat1, rep.calibration_error / inst.prior));
    detail::add_hybrid_steps(rep, rep.hybrids.back(), "hybrid_1");
  } else {
    rep.notes.push_back("hybrid check skipped: N^k exceeds the brute-force cap");
  }
  return rep;
}

// Lifts of a family on X to X^k: f(z_j) for every coordinate j, and the
// diagonal products prod_i f(z_i).
inline TupleFamily lift_family(const Family& fam, std::size_t k, std::string name,
                               std::size_t cap = kDefaultTupleCap) {
  TupleFamily out;
  out.name = std::move(name);
  const std::size_t n = fam.domain_size();
  for (std::size_t m = 0; m < fam.size(); ++m) {
    const auto& f = fam[m];
    for (std::size_t j = 0; j < k; ++j) {
      out.members.push_back(TupleFn::tabulate(
          n, k, [&](std::span<const std::size_t> z) { return f[z[j]]; },
          f.descriptor + "@" + std::to_string(j), cap));
    }
    if (k > 1) {
      out.members.push_back(TupleFn::tabulate(
          n, k,
          [&](std::span<const std::size_t> z) {
            double v = 1.0;
            for (std::size_t zi : z) v *= f[zi];
            return v;
          },
          "prod " + f.descriptor, cap));
    }
  }
  return out;
}

// max over the family of |E_{P^k} f - E_{Q^k} f|, by brute force.
inline FamilyDistance tuple_family_distance(const TupleFamily& fam,
                                            std::span<const double> p,
                                            std::span<const double> q) {
  if (fam.members.empty()) throw InvalidArgument("tuple family is empty");
  FamilyDistance best{-1.0, 0};
  for (std::size_t j = 0; j < fam.members.size(); ++j) {
    const TupleFn& f = fam.members[j];
    std::vector<std::span<const double>> fp(f.k(), p), fq(f.k(), q);
    const double gap =
        std::abs(product_expectation(f, std::span<const std::span<const double>>(fp)) -
                 product_expectation(f, std::span<const std::span<const double>>(fq)));
    if (gap > best.value) best = {gap, j};
  }
  return best;
}

struct CharacterizeOptions {
  std::optional<TupleFamily> lower;  // defaults to the lifts of F
  double round_grid = 0.0;
};

namespace detail {

// Regularity and calibration levels used internally so that every link of
// the chain closes with total slack k·eps.
struct ChainBudget {
  double prior;
  double eps_regular;  // simulator audited at this multiaccuracy level
  double gamma;
  double proxy_eps;    // eps passed to the verifier
};

inline ChainBudget chain_budget(double eps, ProxyMode mode) {
  if (mode == ProxyMode::kTwoProxy) {
    const double er = eps / 5.0;
    return {0.5, er, er * er / 20.0, er};
  }
  const double ep = eps / 3.0;
  return {ep, ep * ep, ep * ep * ep / 20.0, ep};
}

inline void add_chain(CharacterizationReport& rep, const MixtureInstance& inst,
                      const ProxyPair& pp, ChainReport chain) {
  const std::size_t k = rep.k;
  const auto lo = tuple_family_distance(chain.lower, inst.d0, inst.d1);
  chain.lower_distance = lo.value;
  chain.lower_witness = lo.witness;
  const auto up = tuple_family_distance(chain.upper, inst.d0, inst.d1);
  chain.upper_distance = up.value;
  chain.upper_witness = up.witness;
  chain.middle = rep.mode == ProxyMode::kTwoProxy ? kfold_tv(*pp.tilde0, pp.tilde1, k)
                                                  : kfold_tv(inst.d0, pp.tilde1, k);
  const double slack = static_cast<double>(k) * rep.epsilon;
  rep.inequalities.push_back(
      Inequality::le("chain_lower", chain.lower_distance - slack, chain.middle, slack));
  rep.inequalities.push_back(
      Inequality::le("chain_upper", chain.middle, chain.upper_distance + slack, slack));
  rep.chain = std::move(chain);
}

}  // namespace detail

// Chain of inequalities with an explicit family F: the lower side uses
// F-derived tests on X^k, the upper side adds the constructed product test.
inline CharacterizationReport characterize(const Distribution& d0, const Distribution& d1,
                                           const Family& fam, double eps, std::size_t k,
                                           ProxyMode mode,
                                           const CharacterizeOptions& opt = {}) {
  if (!(eps > 0.0 && eps < 0.5)) throw InvalidArgument("epsilon must lie in (0, 0.5)");
  if (k == 0) throw InvalidArgument("k must be >= 1");
  const auto budget = detail::chain_budget(eps, mode);
  const MixtureInstance inst = build_mixture(d0, d1, budget.prior);
  BoostParams params;
  params.epsilon = budget.eps_regular;
  params.gamma = budget.gamma;
  params.round_grid = opt.round_grid;
  const Simulation sim = calibrated_multiaccuracy(inst.g, inst.dx, fam, params);

  CharacterizationReport rep =
      mode == ProxyMode::kTwoProxy
          ? verify_balanced(inst, sim.predictor, fam, budget.eps_regular, budget.gamma, k)
          : verify_tilted(inst, sim.predictor, fam, budget.proxy_eps, budget.gamma, k);
  rep.kind = "characterize";
  rep.epsilon = eps;
  rep.trace = sim.trace;
  if (mode == ProxyMode::kSingleProxy) {
    rep.notes.push_back("single-proxy: tilde0 is D0");
    rep.tilde0 = detail::to_vec(d0.weights());
  }

  ChainReport chain;
  chain.lower = opt.lower ? *opt.lower : lift_family(fam, k, "lift(F)");
  chain.upper = chain.lower;
  chain.upper.name = chain.lower.name + " + test";
  const ProductTest test = mode == ProxyMode::kTwoProxy
                               ? ProductTest::balanced(sim.predictor, k)
                               : ProductTest::tilted(sim.predictor, k, budget.prior);
  chain.upper.members.push_back(test.tabulate());
  chain.same_family = false;
  const ProxyPair pp = build_proxies(inst, sim.predictor, mode);
  detail::add_chain(rep, inst, pp, std::move(chain));
  return rep;
}

// Chain of inequalities at a single ladder level: a calibrated expanding
// supersimulator at level s' fools ladder[G(s')], and the chain family on
// X^k is the lift of ladder[G(s')] plus the product test on both sides.
inline CharacterizationReport characterize_super(const Distribution& d0,
                                                 const Distribution& d1,
                                                 const GradedLadder& ladder,
                                                 const GrowthMap& growth, double eps,
                                                 std::size_t k, ProxyMode mode,
                                                 double round_grid = 0.0) {
  if (!(eps > 0.0 && eps < 0.5)) throw InvalidArgument("epsilon must lie in (0, 0.5)");
  if (k == 0) throw InvalidArgument("k must be >= 1");
  const auto budget = detail::chain_budget(eps, mode);
  const MixtureInstance inst = build_mixture(d0, d1, budget.prior);
  SupersimOptions opt;
  opt.gamma = budget.gamma;
  opt.round_grid = round_grid;
  const SupersimResult sim =
      supersimulator_expanding(inst.g, inst.dx, ladder, growth, budget.eps_regular, opt);
  const Family& fooled = ladder[sim.fooled_level];

  CharacterizationReport rep =
      mode == ProxyMode::kTwoProxy
          ? verify_balanced(inst, sim.predictor, fooled, budget.eps_regular, budget.gamma, k)
          : verify_tilted(inst, sim.predictor, fooled, budget.proxy_eps, budget.gamma, k);
  rep.kind = "characterize_super";
  rep.epsilon = eps;
  rep.trace = sim.trace;
  if (mode == ProxyMode::kSingleProxy) {
    rep.notes.push_back("single-proxy: tilde0 is D0");
    rep.tilde0 = detail::to_vec(d0.weights());
  }

  ChainReport chain;
  chain.lower = lift_family(fooled, k, "lift(level " + std::to_string(sim.fooled_level) + ") + test");
  const ProductTest test = mode == ProxyMode::kTwoProxy
                               ? ProductTest::balanced(sim.predictor, k)
                               : ProductTest::tilted(sim.predictor, k, budget.prior);
  chain.lower.members.push_back(test.tabulate());
  chain.upper = chain.lower;
  chain.same_family = true;
  chain.level = sim.level;
  chain.fooled_level = sim.fooled_level;
  chain.level_label = ladder.label(sim.level);
  chain.fooled_label = ladder.label(sim.fooled_level);
  chain.bound_level = sim.bound_level;
  // The product test makes k calls to a level-s' predictor plus a threshold
  // over k log-values; it lies in the fooled class when that class's label
  // covers k copies of level s' plus ⌈k/ε⌉² gates.
  const auto kk = static_cast<std::uint64_t>(k);
  const auto post = static_cast<std::uint64_t>(std::ceil(static_cast<double>(k) / eps));
  const ComplexityLabel need = ladder.label(sim.level).scaled(kk) + ComplexityLabel{0, post * post};
  chain.test_contained = need.leq(ladder.label(sim.fooled_level));
  if (!*chain.test_contained) {
    rep.notes.push_back("the product test may exceed the fooled class " +
                        ladder.label(sim.fooled_level).str() + " (needs " + need.str() + ")");
  }
  const ProxyPair pp = build_proxies(inst, sim.predictor, mode);
  detail::add_chain(rep, inst, pp, std::move(chain));
  return rep;
}

}  // namespace regsim
