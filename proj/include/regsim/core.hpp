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

// Explicit finite probability spaces: distributions, [0,1]-valued functions,
// expectations, total variation, and exact statistics of k-fold products.
//
// k-fold products are evaluated through type classes: a k-tuple over an
// N-element domain is summarised by its count vector, every tuple in a class
// has the same product probability, and there are only C(k+N-1, N-1) classes.
// A brute-force N^k path is kept for tests that are not symmetric (hybrids).

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "regsim/error.hpp"

namespace regsim {

inline constexpr double kStructuralTol = 1e-12;
inline constexpr double kDerivedTol = 1e-10;
inline constexpr std::size_t kDefaultTypeClassCap = 5'000'000;
inline constexpr std::size_t kDefaultTupleCap = 5'000'000;

namespace detail {

inline void require_same_size(const char* what, std::size_t a, std::size_t b) {
  if (a != b) throw DomainMismatch(what, a, b);
}

inline void require_finite_nonnegative(std::span<const double> w,
                                       const char* what) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < 0.0) {
      throw InvalidArgument(std::string(what) + ": entry " +
                            std::to_string(i) +
                            " must be finite and nonnegative");
    }
  }
}

inline double sum(std::span<const double> w) {
  double s = 0.0;
  for (double v : w) s += v;
  return s;
}

}  // namespace detail

// The domain X = {0, ..., size-1}. When bit_width is present every element
// carries an n-bit encoding (its index written in binary).
struct FiniteDomain {
  std::size_t size = 1;
  std::optional<unsigned> bit_width;

  static FiniteDomain make(std::size_t size,
                           std::optional<unsigned> bit_width = std::nullopt) {
    if (size == 0) throw InvalidArgument("domain size must be >= 1");
    if (bit_width) {
      if (*bit_width >= 63) throw InvalidArgument("bit_width must be < 63");
      if (size > (std::size_t{1} << *bit_width)) {
        throw InvalidArgument("domain size exceeds 2^bit_width");
      }
    }
    return FiniteDomain{size, bit_width};
  }

  static FiniteDomain bits(unsigned n) {
    if (n >= 63) throw InvalidArgument("bit_width must be < 63");
    return make(std::size_t{1} << n, n);
  }

  friend bool operator==(const FiniteDomain&, const FiniteDomain&) = default;
};

// A probability vector over an explicit finite domain.
class Distribution {
 public:
  Distribution() = default;

  explicit Distribution(std::vector<double> weights) : w_(std::move(weights)) {
    if (w_.empty()) throw InvalidArgument("distribution must be nonempty");
    detail::require_finite_nonnegative(w_, "distribution");
    const double s = detail::sum(w_);
    if (std::abs(s - 1.0) > kStructuralTol) {
      throw InvalidArgument("distribution weights must sum to 1 (got " +
                            std::to_string(s) + ")");
    }
  }

  static Distribution uniform(std::size_t n) {
    if (n == 0) throw InvalidArgument("distribution must be nonempty");
    return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  static Distribution point(std::size_t n, std::size_t x) {
    if (x >= n) throw InvalidArgument("point mass outside the domain");
    std::vector<double> w(n, 0.0);
    w[x] = 1.0;
    return Distribution(std::move(w));
  }

  // Scales nonnegative weights with positive total onto the simplex.
  static Distribution normalize(std::vector<double> weights) {
    detail::require_finite_nonnegative(weights, "distribution");
    const double s = detail::sum(weights);
    if (!(s > 0.0)) throw InvalidArgument("cannot normalise zero total mass");
    for (double& v : weights) v /= s;
    return Distribution(std::move(weights));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t x) const { return w_[x]; }
  std::span<const double> weights() const noexcept { return w_; }
  operator std::span<const double>() const noexcept { return w_; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> w_;
};

// A finite nonnegative measure. Used for the unnormalised reweightings that
// the proxy analysis works with, which sum to 1 only approximately.
class Measure {
 public:
  Measure() = default;

  explicit Measure(std::vector<double> weights) : w_(std::move(weights)) {
    detail::require_finite_nonnegative(w_, "measure");
  }

  static Measure of(const Distribution& d) {
    return Measure(std::vector<double>(d.weights().begin(), d.weights().end()));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t x) const { return w_[x]; }
  double total() const { return detail::sum(w_); }
  std::span<const double> weights() const noexcept { return w_; }
  operator std::span<const double>() const noexcept { return w_; }

 private:
  std::vector<double> w_;
};

// A [0,1]-valued function on the domain: targets, simulators, distinguishers.
class BoundedFn {
 public:
  BoundedFn() = default;

  explicit BoundedFn(std::vector<double> values) : v_(std::move(values)) {
    if (v_.empty()) throw InvalidArgument("function must be nonempty");
    for (std::size_t i = 0; i < v_.size(); ++i) {
      if (!(v_[i] >= 0.0 && v_[i] <= 1.0)) {
        throw InvalidArgument("function value at " + std::to_string(i) +
                              " must lie in [0, 1]");
      }
    }
  }

  static BoundedFn constant(std::size_t n, double c) {
    return BoundedFn(std::vector<double>(n, c));
  }

  static BoundedFn indicator(std::size_t n, std::size_t x) {
    if (x >= n) throw InvalidArgument("indicator outside the domain");
    std::vector<double> v(n, 0.0);
    v[x] = 1.0;
    return BoundedFn(std::move(v));
  }

  std::size_t size() const noexcept { return v_.size(); }
  double operator[](std::size_t x) const { return v_[x]; }
  std::span<const double> values() const noexcept { return v_; }
  operator std::span<const double>() const noexcept { return v_; }

  friend bool operator==(const BoundedFn&, const BoundedFn&) = default;

 private:
  std::vector<double> v_;
};

// E_{x~w}[f(x)]. The weights need not be normalised, which lets the same
// routine integrate against measures.
inline double expectation(std::span<const double> f,
                          std::span<const double> weights) {
  detail::require_same_size("expectation", f.size(), weights.size());
  double s = 0.0;
  for (std::size_t x = 0; x < f.size(); ++x) s += weights[x] * f[x];
  return s;
}

// E_{x~D}[f(x)(g(x) - h(x))], with f allowed to be signed.
inline double correlation(std::span<const double> f, const BoundedFn& g,
                          const BoundedFn& h, const Distribution& d) {
  detail::require_same_size("correlation", f.size(), d.size());
  detail::require_same_size("correlation", g.size(), d.size());
  detail::require_same_size("correlation", h.size(), d.size());
  double s = 0.0;
  for (std::size_t x = 0; x < d.size(); ++x) {
    s += d[x] * f[x] * (g[x] - h[x]);
  }
  return s;
}

// E_{x~D}[(g(x) - h(x))^2].
inline double potential(const BoundedFn& g, const BoundedFn& h,
                        const Distribution& d) {
  detail::require_same_size("potential", g.size(), d.size());
  detail::require_same_size("potential", h.size(), d.size());
  double s = 0.0;
  for (std::size_t x = 0; x < d.size(); ++x) {
    const double r = g[x] - h[x];
    s += d[x] * r * r;
  }
  return s;
}

// Half the L1 distance. For probability vectors this is total variation.
inline double tv_distance(std::span<const double> p, std::span<const double> q) {
  detail::require_same_size("tv_distance", p.size(), q.size());
  double s = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) s += std::abs(p[x] - q[x]);
  return 0.5 * s;
}

// Number of compositions of k into n nonnegative parts, C(k+n-1, n-1), as a
// double so that callers can compare against caps without overflow.
inline double type_class_count(std::size_t n, std::size_t k) {
  const std::size_t r = std::min(n - 1, k);
  double c = 1.0;
  for (std::size_t i = 1; i <= r; ++i) {
    c = c * static_cast<double>(k + n - 1 - r + i) / static_cast<double>(i);
  }
  return c;
}

// k! / prod_x c_x!, accumulated as a product of binomials.
inline double multinomial(std::span<const std::uint32_t> counts) {
  double m = 1.0;
  std::uint64_t running = 0;
  for (std::uint32_t c : counts) {
    for (std::uint32_t j = 1; j <= c; ++j) {
      ++running;
      m = m * static_cast<double>(running) / static_cast<double>(j);
    }
  }
  return m;
}

// All multiset types of k-tuples over an n-element domain, each with its
// multinomial weight and its total probability under every base measure.
struct TypeClassTable {
  std::size_t k = 0;
  std::size_t n = 0;
  std::vector<std::uint32_t> counts;         // entries() rows of n counts
  std::vector<double> multinomial;           // per entry
  std::vector<std::vector<double>> masses;   // [measure][entry]

  std::size_t entries() const noexcept { return multinomial.size(); }

  std::span<const std::uint32_t> counts_of(std::size_t entry) const {
    return std::span<const std::uint32_t>(counts).subspan(entry * n, n);
  }
};

namespace detail {

// Visits every composition of k into n parts, starting at (k, 0, ..., 0) and
// moving mass rightwards.
template <typename Visit>
void for_each_composition(std::size_t n, std::size_t k, Visit&& visit) {
  std::vector<std::uint32_t> c(n, 0);
  c[0] = static_cast<std::uint32_t>(k);
  for (;;) {
    visit(std::span<const std::uint32_t>(c));
    if (n == 1) return;
    std::size_t i = n - 1;
    bool found = false;
    while (i-- > 0) {
      if (c[i] > 0) {
        found = true;
        break;
      }
    }
    if (!found) return;
    const std::uint32_t tail = c[n - 1];
    c[n - 1] = 0;
    c[i] -= 1;
    c[i + 1] = tail + 1;
  }
}

inline double type_mass(std::span<const std::uint32_t> counts,
                        std::span<const double> w, double multinomial_weight) {
  double m = multinomial_weight;
  for (std::size_t x = 0; x < counts.size(); ++x) {
    if (counts[x] != 0) m *= std::pow(w[x], static_cast<double>(counts[x]));
  }
  return m;
}

inline void check_type_class_cap(std::size_t n, std::size_t k, std::size_t cap) {
  if (k == 0) throw InvalidArgument("k must be >= 1");
  if (n == 0) throw InvalidArgument("domain must be nonempty");
  const double count = type_class_count(n, k);
  if (count > static_cast<double>(cap)) {
    throw CapExceeded("k-fold type-class table would need " +
                      std::to_string(count) + " entries (cap " +
                      std::to_string(cap) +
                      "); use a Monte Carlo estimate for this size");
  }
}

}  // namespace detail

// Enumerates type classes for measures that share a domain (probability
// vectors or unnormalised measures).
inline TypeClassTable kfold_type_classes(
    std::span<const std::span<const double>> measures, std::size_t k,
    std::size_t cap = kDefaultTypeClassCap) {
  if (measures.empty()) throw InvalidArgument("need at least one measure");
  const std::size_t n = measures[0].size();
  for (const auto& m : measures) {
    detail::require_same_size("kfold_type_classes", n, m.size());
  }
  detail::check_type_class_cap(n, k, cap);

  TypeClassTable table;
  table.k = k;
  table.n = n;
  table.masses.resize(measures.size());
  detail::for_each_composition(n, k, [&](std::span<const std::uint32_t> c) {
    const double mw = multinomial(c);
    table.counts.insert(table.counts.end(), c.begin(), c.end());
    table.multinomial.push_back(mw);
    for (std::size_t j = 0; j < measures.size(); ++j) {
      table.masses[j].push_back(detail::type_mass(c, measures[j], mw));
    }
  });
  return table;
}

inline TypeClassTable kfold_type_classes(std::span<const Distribution> ps,
                                         std::size_t k,
                                         std::size_t cap = kDefaultTypeClassCap) {
  std::vector<std::span<const double>> spans;
  spans.reserve(ps.size());
  for (const auto& p : ps) spans.push_back(p.weights());
  return kfold_type_classes(std::span<const std::span<const double>>(spans), k,
                            cap);
}

// Exact half-L1 distance between the k-fold products of two measures.
inline double kfold_tv(std::span<const double> p, std::span<const double> q,
                       std::size_t k, std::size_t cap = kDefaultTypeClassCap) {
  detail::require_same_size("kfold_tv", p.size(), q.size());
  detail::check_type_class_cap(p.size(), k, cap);
  double s = 0.0;
  detail::for_each_composition(p.size(), k, [&](std::span<const std::uint32_t> c) {
    const double mw = multinomial(c);
    s += std::abs(detail::type_mass(c, p, mw) - detail::type_mass(c, q, mw));
  });
  return 0.5 * s;
}

// A test that depends on a k-tuple only through its count vector.
template <typename T>
concept SymmetricTest = requires(const T& t, std::span<const std::uint32_t> c) {
  { t(c) } -> std::convertible_to<double>;
};

// E_{z ~ P^k}[test(z)] for a symmetric test, summed over type classes.
template <SymmetricTest Test>
double kfold_expectation(const Test& test, std::span<const double> p,
                         std::size_t k, std::size_t cap = kDefaultTypeClassCap) {
  detail::check_type_class_cap(p.size(), k, cap);
  double s = 0.0;
  detail::for_each_composition(p.size(), k, [&](std::span<const std::uint32_t> c) {
    const double v = static_cast<double>(test(c));
    if (v != 0.0) s += v * detail::type_mass(c, p, multinomial(c));
  });
  return s;
}

// An explicit function on X^k, stored row-major with coordinate 0 most
// significant. This is the brute-force representation: anything can be put
// here, symmetric or not.
class TupleFn {
 public:
  TupleFn() = default;

  TupleFn(std::size_t n, std::size_t k, std::vector<double> values,
          std::string descriptor = {})
      : n_(n), k_(k), v_(std::move(values)), descriptor_(std::move(descriptor)) {
    if (n == 0 || k == 0) throw InvalidArgument("tuple function needs n, k >= 1");
    if (v_.size() != tuple_count(n, k, std::numeric_limits<std::size_t>::max())) {
      throw InvalidArgument("tuple function has the wrong number of values");
    }
    for (double v : v_) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw InvalidArgument("tuple function values must lie in [0, 1]");
      }
    }
  }

  // n^k, or CapExceeded when it would exceed the cap.
  static std::size_t tuple_count(std::size_t n, std::size_t k, std::size_t cap) {
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) {
      if (total > cap / n) {
        throw CapExceeded("brute-force enumeration of " + std::to_string(n) +
                          "^" + std::to_string(k) + " tuples exceeds the cap " +
                          std::to_string(cap));
      }
      total *= n;
    }
    return total;
  }

  template <typename Fn>
  static TupleFn tabulate(std::size_t n, std::size_t k, Fn&& fn,
                          std::string descriptor = {},
                          std::size_t cap = kDefaultTupleCap) {
    const std::size_t total = tuple_count(n, k, cap);
    std::vector<double> values(total);
    std::vector<std::size_t> z(k, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
      values[flat] = static_cast<double>(fn(std::span<const std::size_t>(z)));
      for (std::size_t i = k; i-- > 0;) {
        if (++z[i] < n) break;
        z[i] = 0;
      }
    }
    return TupleFn(n, k, std::move(values), std::move(descriptor));
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }
  const std::string& descriptor() const noexcept { return descriptor_; }
  std::span<const double> values() const noexcept { return v_; }
  double at(std::size_t flat) const { return v_[flat]; }

  double operator()(std::span<const std::size_t> z) const {
    std::size_t flat = 0;
    for (std::size_t zi : z) flat = flat * n_ + zi;
    return v_[flat];
  }

  // Invariant under every permutation of coordinates. Checking adjacent
  // transpositions suffices since they generate the symmetric group.
  // Invariance under adjacent swaps, up to rounding (kStructuralTol).
  bool is_symmetric() const {
    std::vector<std::size_t> z(k_, 0);
    for (std::size_t flat = 0; flat < v_.size(); ++flat) {
      for (std::size_t i = 0; i + 1 < k_; ++i) {
        std::swap(z[i], z[i + 1]);
        const bool same = std::abs((*this)(z) - v_[flat]) <= kStructuralTol;
        std::swap(z[i], z[i + 1]);
        if (!same) return false;
      }
      for (std::size_t i = k_; i-- > 0;) {
        if (++z[i] < n_) break;
        z[i] = 0;
      }
    }
    return true;
  }

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<double> v_;
  std::string descriptor_;
};

// Type-class evaluation of an explicit tuple function. Rejects functions
// that are not symmetric: those need product_expectation instead.
inline double kfold_expectation(const TupleFn& f, std::span<const double> p,
                                std::size_t k,
                                std::size_t cap = kDefaultTypeClassCap) {
  detail::require_same_size("kfold_expectation", f.n(), p.size());
  if (f.k() != k) throw InvalidArgument("tuple function arity differs from k");
  if (!f.is_symmetric()) {
    throw InvalidArgument(
        "kfold_expectation needs a symmetric test; use product_expectation "
        "for coordinate-dependent tests");
  }
  std::vector<std::size_t> z(k);
  auto at_counts = [&](std::span<const std::uint32_t> c) {
    std::size_t pos = 0;
    for (std::size_t x = 0; x < c.size(); ++x) {
      for (std::uint32_t j = 0; j < c[x]; ++j) z[pos++] = x;
    }
    return f(z);
  };
  return kfold_expectation(at_counts, p, k, cap);
}

// E over the product measure factors[0] x ... x factors[k-1] of fn(z), by
// brute force over all n^k tuples. Factors may differ per coordinate.
template <typename Fn>
double product_expectation(Fn&& fn,
                           std::span<const std::span<const double>> factors,
                           std::size_t cap = kDefaultTupleCap) {
  if (factors.empty()) throw InvalidArgument("need at least one factor");
  const std::size_t n = factors[0].size();
  for (const auto& f : factors) {
    detail::require_same_size("product_expectation", n, f.size());
  }
  const std::size_t k = factors.size();
  const std::size_t total = TupleFn::tuple_count(n, k, cap);
  std::vector<std::size_t> z(k, 0);
  double s = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    double w = 1.0;
    for (std::size_t i = 0; i < k && w != 0.0; ++i) w *= factors[i][z[i]];
    if (w != 0.0) s += w * static_cast<double>(fn(std::span<const std::size_t>(z)));
    for (std::size_t i = k; i-- > 0;) {
      if (++z[i] < n) break;
      z[i] = 0;
    }
  }
  return s;
}

inline double product_expectation(const TupleFn& f,
                                  std::span<const std::span<const double>> factors,
                                  std::size_t cap = kDefaultTupleCap) {
  if (factors.size() != f.k()) {
    throw InvalidArgument("number of factors differs from the tuple arity");
  }
  return product_expectation([&](std::span<const std::size_t> z) { return f(z); },
                             factors, cap);
}

// Fingerprint of a function's exact bit pattern (FNV-1a). Used to tag trace
// snapshots without storing every intermediate predictor.
inline std::uint64_t digest(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(v));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffU;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace regsim
