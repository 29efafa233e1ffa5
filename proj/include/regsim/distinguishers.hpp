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

// Distinguisher families, graded ladders of families with (calls, gates)
// complexity labels, growth maps between ladder levels, and exhaustive
// best-response search.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "regsim/core.hpp"

namespace regsim {

// A point in the (oracle calls, post-processing gates) complexity lattice.
// Arithmetic saturates at the uint64 limit and remembers that it did.
struct ComplexityLabel {
  std::uint64_t s1 = 0;
  std::uint64_t s2 = 0;
  bool saturated = false;

  static constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();

  static std::uint64_t sat_add(std::uint64_t a, std::uint64_t b, bool& sat) {
    if (a > kMax - b) {
      sat = true;
      return kMax;
    }
    return a + b;
  }

  static std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b, bool& sat) {
    if (a != 0 && b > kMax / a) {
      sat = true;
      return kMax;
    }
    return a * b;
  }

  friend ComplexityLabel operator+(const ComplexityLabel& a,
                                   const ComplexityLabel& b) {
    ComplexityLabel r;
    r.saturated = a.saturated || b.saturated;
    r.s1 = sat_add(a.s1, b.s1, r.saturated);
    r.s2 = sat_add(a.s2, b.s2, r.saturated);
    return r;
  }

  ComplexityLabel scaled(std::uint64_t m) const {
    ComplexityLabel r;
    r.saturated = saturated;
    r.s1 = sat_mul(s1, m, r.saturated);
    r.s2 = sat_mul(s2, m, r.saturated);
    return r;
  }

  // Componentwise maximum (least upper bound).
  ComplexityLabel join(const ComplexityLabel& o) const {
    return {std::max(s1, o.s1), std::max(s2, o.s2), saturated || o.saturated};
  }

  bool leq(const ComplexityLabel& o) const { return s1 <= o.s1 && s2 <= o.s2; }

  friend bool operator==(const ComplexityLabel& a, const ComplexityLabel& b) {
    return a.s1 == b.s1 && a.s2 == b.s2;
  }

  std::string str() const {
    return "(" + std::to_string(s1) + ", " + std::to_string(s2) + ")" +
           (saturated ? "*" : "");
  }
};

struct Distinguisher {
  BoundedFn values;
  ComplexityLabel label;
  std::string descriptor;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t x) const { return values[x]; }
};

class Family {
 public:
  Family() = default;

  explicit Family(std::vector<Distinguisher> members,
                  std::optional<ComplexityLabel> declared = std::nullopt)
      : members_(std::move(members)) {
    if (members_.empty()) throw InvalidArgument("family must be nonempty");
    for (const auto& m : members_) {
      detail::require_same_size("family member", members_[0].size(), m.size());
      label_ = label_.join(m.label);
    }
    if (declared) label_ = label_.join(*declared);
  }

  std::size_t size() const noexcept { return members_.size(); }
  std::size_t domain_size() const { return members_.at(0).size(); }
  const Distinguisher& operator[](std::size_t i) const { return members_[i]; }
  const std::vector<Distinguisher>& members() const noexcept { return members_; }
  const ComplexityLabel& label() const noexcept { return label_; }

  auto begin() const { return members_.begin(); }
  auto end() const { return members_.end(); }

  // Index of a member with exactly these values.
  std::optional<std::size_t> find(const BoundedFn& f) const {
    for (std::size_t i = 0; i < members_.size(); ++i) {
      if (members_[i].values == f) return i;
    }
    return std::nullopt;
  }

  // This family plus the given extra members, skipping value duplicates.
  Family with(std::span<const Distinguisher> extra) const {
    std::vector<Distinguisher> out = members_;
    for (const auto& d : extra) {
      const bool dup = std::any_of(out.begin(), out.end(), [&](const auto& m) {
        return m.values == d.values;
      });
      if (!dup) out.push_back(d);
    }
    return Family(std::move(out), label_);
  }

 private:
  std::vector<Distinguisher> members_;
  ComplexityLabel label_;
};

// Nested families F_0 ⊆ F_1 ⊆ ... with nondecreasing labels.
class GradedLadder {
 public:
  GradedLadder() = default;

  GradedLadder(std::vector<Family> levels, std::vector<ComplexityLabel> labels,
               std::string name = "ladder")
      : levels_(std::move(levels)), labels_(std::move(labels)),
        name_(std::move(name)) {
    if (levels_.empty()) throw InvalidArgument(name_ + ": ladder needs a level");
    if (labels_.size() != levels_.size()) {
      throw InvalidArgument(name_ + ": one label per level is required");
    }
    if (auto why = nesting_violation(levels_, labels_)) {
      throw InvalidArgument(name_ + ": " + *why);
    }
  }

  // Labels default to each family's own label.
  explicit GradedLadder(std::vector<Family> levels, std::string name = "ladder")
      : GradedLadder(levels, labels_of(levels), std::move(name)) {}

  // Names the first adjacent pair that breaks nesting or label order.
  static std::optional<std::string> nesting_violation(
      const std::vector<Family>& levels,
      const std::vector<ComplexityLabel>& labels) {
    for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
      detail::require_same_size("ladder levels", levels[i].domain_size(),
                                levels[i + 1].domain_size());
      for (std::size_t m = 0; m < levels[i].size(); ++m) {
        if (!levels[i + 1].find(levels[i][m].values)) {
          return "level " + std::to_string(i) + " is not contained in level " +
                 std::to_string(i + 1) + " (member " + std::to_string(m) +
                 " '" + levels[i][m].descriptor + "' is missing)";
        }
      }
      if (i < labels.size() && i + 1 < labels.size() &&
          !labels[i].leq(labels[i + 1])) {
        return "labels of levels " + std::to_string(i) + " and " +
               std::to_string(i + 1) + " decrease (" + labels[i].str() +
               " then " + labels[i + 1].str() + ")";
      }
    }
    return std::nullopt;
  }

  std::size_t depth() const noexcept { return levels_.size(); }
  std::size_t top() const noexcept { return levels_.size() - 1; }
  const Family& operator[](std::size_t i) const { return levels_.at(i); }
  const Family& level(std::size_t i) const { return levels_.at(i); }
  const ComplexityLabel& label(std::size_t i) const { return labels_.at(i); }
  const std::string& name() const noexcept { return name_; }

  // Lowest level at or below `level` that contains the given member of
  // levels_[level]. Nesting guarantees the answer exists.
  std::size_t first_level(std::size_t level, std::size_t member) const {
    const BoundedFn& f = levels_.at(level)[member].values;
    for (std::size_t j = 0; j < level; ++j) {
      if (levels_[j].find(f)) return j;
    }
    return level;
  }

 private:
  static std::vector<ComplexityLabel> labels_of(const std::vector<Family>& ls) {
    std::vector<ComplexityLabel> out;
    for (const auto& f : ls) out.push_back(f.label());
    return out;
  }

  std::vector<Family> levels_;
  std::vector<ComplexityLabel> labels_;
  std::string name_;
};

// A nondecreasing inflationary map on ladder indices.
class GrowthMap {
 public:
  enum class Kind { kIdentity, kShift, kTable };

  static GrowthMap identity() { return GrowthMap(Kind::kIdentity, 0, {}); }

  static GrowthMap shift(std::size_t d) { return GrowthMap(Kind::kShift, d, {}); }

  static GrowthMap table(std::vector<std::size_t> t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] < i) {
        throw InvalidArgument("growth table must satisfy G(i) >= i (fails at " +
                              std::to_string(i) + ")");
      }
      if (i > 0 && t[i] < t[i - 1]) {
        throw InvalidArgument("growth table must be nondecreasing (fails at " +
                              std::to_string(i) + ")");
      }
    }
    return GrowthMap(Kind::kTable, 0, std::move(t));
  }

  Kind kind() const noexcept { return kind_; }
  std::size_t shift_amount() const noexcept { return shift_; }
  const std::vector<std::size_t>& entries() const noexcept { return table_; }

  // Unbounded image; table maps continue as shift-by-last-gap past the end.
  std::size_t map(std::size_t i) const {
    switch (kind_) {
      case Kind::kIdentity:
        return i;
      case Kind::kShift:
        return i + shift_;
      case Kind::kTable:
        if (i < table_.size()) return table_[i];
        return table_.empty() ? i : i + (table_.back() - (table_.size() - 1));
    }
    return i;
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::kIdentity:
        return "identity";
      case Kind::kShift:
        return "shift+" + std::to_string(shift_);
      case Kind::kTable:
        return "table";
    }
    return "?";
  }

 private:
  GrowthMap(Kind k, std::size_t s, std::vector<std::size_t> t)
      : kind_(k), shift_(s), table_(std::move(t)) {}

  Kind kind_;
  std::size_t shift_;
  std::vector<std::size_t> table_;
};

// G(level), checked against the ladder.
inline std::size_t apply_growth(const GrowthMap& g, std::size_t level,
                                const GradedLadder& ladder) {
  if (level >= ladder.depth()) {
    throw InvalidArgument("level " + std::to_string(level) +
                          " is outside ladder '" + ladder.name() + "'");
  }
  const std::size_t image = g.map(level);
  if (image >= ladder.depth()) {
    throw LadderExhausted("ladder '" + ladder.name() + "' exhausted: growth " +
                          g.describe() + " maps level " + std::to_string(level) +
                          " to " + std::to_string(image) + " but depth is " +
                          std::to_string(ladder.depth()));
  }
  return image;
}

// Nonincreasing error levels in (0, 1/2) indexed by ladder level.
class ErrorSchedule {
 public:
  static ErrorSchedule constant(double eps) { return ErrorSchedule({eps}); }

  static ErrorSchedule geometric(double eps0, double ratio, std::size_t levels) {
    if (!(ratio > 0.0 && ratio <= 1.0)) {
      throw InvalidArgument("schedule ratio must lie in (0, 1]");
    }
    std::vector<double> v;
    double e = eps0;
    for (std::size_t i = 0; i < std::max<std::size_t>(levels, 1); ++i) {
      v.push_back(e);
      e *= ratio;
    }
    return ErrorSchedule(std::move(v));
  }

  static ErrorSchedule explicit_values(std::vector<double> v) {
    return ErrorSchedule(std::move(v));
  }

  // Levels past the end reuse the last value.
  double at(std::size_t level) const {
    return values_[std::min(level, values_.size() - 1)];
  }

  const std::vector<double>& values() const noexcept { return values_; }

 private:
  explicit ErrorSchedule(std::vector<double> v) : values_(std::move(v)) {
    if (values_.empty()) throw InvalidArgument("schedule must be nonempty");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!(values_[i] > 0.0 && values_[i] < 0.5)) {
        throw InvalidArgument("schedule values must lie in (0, 0.5)");
      }
      if (i > 0 && values_[i] > values_[i - 1]) {
        throw InvalidArgument("schedule must be nonincreasing");
      }
    }
  }

  std::vector<double> values_;
};

struct BestResponse {
  std::size_t index = 0;
  const Distinguisher* distinguisher = nullptr;
  int sign = 1;
  double correlation = 0.0;  // sign * E[f (g - h)], always >= 0
  double slack = 0.0;
};

namespace detail {

// Worker count from REGSIM_THREADS; defaults to 1.
inline unsigned thread_count() {
  static const unsigned n = [] {
    const char* env = std::getenv("REGSIM_THREADS");
    if (!env) return 1u;
    const long v = std::strtol(env, nullptr, 10);
    return v >= 1 ? static_cast<unsigned>(std::min(v, 256L)) : 1u;
  }();
  return n;
}

struct ScanBest {
  std::size_t index = 0;
  double raw = 0.0;  // E[f (g - h)] before signing
  bool found = false;
};

inline double raw_correlation(const Distinguisher& f, std::span<const double> d,
                              std::span<const double> residual) {
  double s = 0.0;
  for (std::size_t x = 0; x < d.size(); ++x) s += d[x] * f[x] * residual[x];
  return s;
}

// Strictly better magnitude wins; ties keep the earlier index.
inline void scan_range(const Family& fam, std::span<const double> d,
                       std::span<const double> residual, std::size_t lo,
                       std::size_t hi, ScanBest& best) {
  for (std::size_t j = lo; j < hi; ++j) {
    const double c = raw_correlation(fam[j], d, residual);
    if (!best.found || std::abs(c) > std::abs(best.raw)) {
      best = {j, c, true};
    }
  }
}

}  // namespace detail

// Exhaustive maximiser of sigma * E_D[f (g - h)] over sigma in {-1, +1} and
// f in the family. Ties go to the lowest member index, then sigma = +1.
inline BestResponse best_response(const Family& fam, const BoundedFn& g,
                                  const BoundedFn& h, const Distribution& d) {
  if (fam.size() == 0) throw InvalidArgument("best_response on empty family");
  detail::require_same_size("best_response", fam.domain_size(), d.size());
  detail::require_same_size("best_response", g.size(), d.size());
  detail::require_same_size("best_response", h.size(), d.size());

  std::vector<double> residual(d.size());
  for (std::size_t x = 0; x < d.size(); ++x) residual[x] = g[x] - h[x];

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(detail::thread_count(), fam.size()));
  detail::ScanBest best;
  if (workers <= 1 || fam.size() * d.size() < 4096) {
    detail::scan_range(fam, d.weights(), residual, 0, fam.size(), best);
  } else {
    // Fixed contiguous chunks reduced in chunk order keep the result
    // independent of scheduling.
    std::vector<detail::ScanBest> partial(workers);
    std::vector<std::thread> pool;
    const std::size_t chunk = (fam.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = std::min(fam.size(), w * chunk);
      const std::size_t hi = std::min(fam.size(), lo + chunk);
      pool.emplace_back([&, w, lo, hi] {
        detail::scan_range(fam, d.weights(), residual, lo, hi, partial[w]);
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& p : partial) {
      if (p.found && (!best.found || std::abs(p.raw) > std::abs(best.raw))) {
        best = p;
      }
    }
  }

  BestResponse r;
  r.index = best.index;
  r.distinguisher = &fam[best.index];
  r.sign = best.raw >= 0.0 ? 1 : -1;
  r.correlation = std::abs(best.raw);
  r.slack = 0.0;
  return r;
}

struct FamilyDistance {
  double value = 0.0;
  std::size_t witness = 0;
};

// max_f |E_P f - E_Q f|, first maximiser as witness. P and Q may be
// unnormalised measures.
inline FamilyDistance family_distance(const Family& fam,
                                      std::span<const double> p,
                                      std::span<const double> q) {
  if (fam.size() == 0) throw InvalidArgument("family_distance on empty family");
  detail::require_same_size("family_distance", p.size(), q.size());
  detail::require_same_size("family_distance", fam.domain_size(), p.size());
  FamilyDistance best{-1.0, 0};
  for (std::size_t j = 0; j < fam.size(); ++j) {
    const double gap =
        std::abs(expectation(fam[j].values, p) - expectation(fam[j].values, q));
    if (gap > best.value) best = {gap, j};
  }
  return best;
}

// Member i reads bit i of the element's encoding, most significant first.
inline Family build_coordinate_family(const FiniteDomain& dom) {
  if (!dom.bit_width) {
    throw InvalidArgument("coordinate family needs a domain with bit_width");
  }
  const unsigned n = *dom.bit_width;
  if (n == 0) throw InvalidArgument("coordinate family needs bit_width >= 1");
  std::vector<Distinguisher> members;
  for (unsigned i = 0; i < n; ++i) {
    std::vector<double> v(dom.size);
    for (std::size_t x = 0; x < dom.size; ++x) {
      v[x] = static_cast<double>((x >> (n - 1 - i)) & 1U);
    }
    members.push_back({BoundedFn(std::move(v)), {1, 0}, "coord[" + std::to_string(i) + "]"});
  }
  return Family(std::move(members));
}

// {x -> 1[h(x) > tau] : tau in grid}.
inline Family build_threshold_family(const BoundedFn& h,
                                     std::span<const double> grid) {
  if (grid.empty()) throw InvalidArgument("threshold grid must be nonempty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0 && grid[i] <= 1.0)) {
      throw InvalidArgument("threshold grid values must lie in [0, 1]");
    }
    if (i > 0 && grid[i] < grid[i - 1]) {
      throw InvalidArgument("threshold grid must be sorted");
    }
  }
  std::vector<Distinguisher> members;
  for (double tau : grid) {
    std::vector<double> v(h.size());
    for (std::size_t x = 0; x < h.size(); ++x) v[x] = h[x] > tau ? 1.0 : 0.0;
    members.push_back({BoundedFn(std::move(v)), {1, 1}, "thr>" + std::to_string(tau)});
  }
  return Family(std::move(members));
}

// Indicators 1_{S x T} for every S ⊆ rows, T ⊆ cols. Element r*cols + c is
// cell (r, c). Empty S or T give the zero function, so several pairs may
// coincide as functions; they are kept as listed.
inline Family build_rectangle_family(std::size_t rows, std::size_t cols,
                                     std::size_t cap = 1U << 16) {
  if (rows == 0 || cols == 0) throw InvalidArgument("rectangle needs rows, cols >= 1");
  if (rows + cols >= 63 || (std::size_t{1} << (rows + cols)) > cap) {
    throw CapExceeded("rectangle family with 2^" + std::to_string(rows + cols) +
                      " members exceeds the cap " + std::to_string(cap));
  }
  std::vector<Distinguisher> members;
  for (std::size_t s = 0; s < (std::size_t{1} << rows); ++s) {
    for (std::size_t t = 0; t < (std::size_t{1} << cols); ++t) {
      std::vector<double> v(rows * cols, 0.0);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          if (((s >> r) & 1U) && ((t >> c) & 1U)) v[r * cols + c] = 1.0;
        }
      }
      members.push_back({BoundedFn(std::move(v)), {1, 0},
                         "rect[S=" + std::to_string(s) + ",T=" + std::to_string(t) + "]"});
    }
  }
  return Family(std::move(members));
}

// Point indicators for the listed elements.
inline Family build_indicator_family(std::size_t n,
                                     std::span<const std::size_t> points) {
  std::vector<Distinguisher> members;
  for (std::size_t x : points) {
    members.push_back({BoundedFn::indicator(n, x), {1, 0}, "ind[" + std::to_string(x) + "]"});
  }
  return Family(std::move(members));
}

// One post-processing shape applied to up to two base values.
struct Combinator {
  enum class Op { kIdentity, kNegation, kMin, kMax, kAnd, kOr, kAffineClamp };
  Op op = Op::kIdentity;
  double a = 1.0;  // affine slope
  double b = 0.0;  // affine offset
  std::uint64_t gates = 0;

  std::size_t arity() const {
    switch (op) {
      case Op::kMin:
      case Op::kMax:
      case Op::kAnd:
      case Op::kOr:
        return 2;
      default:
        return 1;
    }
  }

  double operator()(double u, double v) const {
    switch (op) {
      case Op::kIdentity:
        return u;
      case Op::kNegation:
        return 1.0 - u;
      case Op::kMin:
        return std::min(u, v);
      case Op::kMax:
        return std::max(u, v);
      case Op::kAnd:
        return (u > 0.5 && v > 0.5) ? 1.0 : 0.0;
      case Op::kOr:
        return (u > 0.5 || v > 0.5) ? 1.0 : 0.0;
      case Op::kAffineClamp:
        return std::clamp(a * u + b, 0.0, 1.0);
    }
    return u;
  }

  std::string name() const {
    switch (op) {
      case Op::kIdentity:
        return "id";
      case Op::kNegation:
        return "not";
      case Op::kMin:
        return "min";
      case Op::kMax:
        return "max";
      case Op::kAnd:
        return "and";
      case Op::kOr:
        return "or";
      case Op::kAffineClamp:
        return "clamp(" + std::to_string(a) + "*u+" + std::to_string(b) + ")";
    }
    return "?";
  }

  static Combinator identity() { return {Op::kIdentity, 1, 0, 0}; }
  static Combinator negation() { return {Op::kNegation, 1, 0, 1}; }
  static Combinator min() { return {Op::kMin, 1, 0, 1}; }
  static Combinator max() { return {Op::kMax, 1, 0, 1}; }
  static Combinator logical_and() { return {Op::kAnd, 1, 0, 3}; }
  static Combinator logical_or() { return {Op::kOr, 1, 0, 3}; }
  static Combinator affine_clamp(double a, double b) {
    return {Op::kAffineClamp, a, b, 2};
  }

  // Shapes parsed from config strings ("identity", "negation", "min", "max",
  // "and", "or", "affine:a:b").
  static Combinator parse(const std::string& s) {
    if (s == "identity") return identity();
    if (s == "negation") return negation();
    if (s == "min") return min();
    if (s == "max") return max();
    if (s == "and") return logical_and();
    if (s == "or") return logical_or();
    if (s.rfind("affine:", 0) == 0) {
      const auto colon = s.find(':', 7);
      if (colon != std::string::npos) {
        return affine_clamp(std::stod(s.substr(7, colon - 7)),
                            std::stod(s.substr(colon + 1)));
      }
    }
    throw InvalidArgument("unknown combinator '" + s + "'");
  }
};

// The base family followed by every catalog shape of arity <= s1 and gate
// cost <= s2 applied to base members, new functions only.
inline Family compose_level(const Family& base, std::uint64_t s1, std::uint64_t s2,
                            std::span<const Combinator> catalog,
                            std::size_t cap = 1U << 16) {
  if (s1 == 0) throw InvalidArgument("compose_level needs s1 >= 1");
  std::vector<Distinguisher> out(base.begin(), base.end());
  const std::size_t n = base.domain_size();
  auto add = [&](std::vector<double> v, ComplexityLabel label, std::string desc) {
    BoundedFn f(std::move(v));
    for (const auto& m : out) {
      if (m.values == f) return;
    }
    if (out.size() >= cap) {
      throw CapExceeded("composed family exceeds the cap " + std::to_string(cap));
    }
    out.push_back({std::move(f), label, std::move(desc)});
  };
  for (const auto& c : catalog) {
    if (c.gates > s2 || c.arity() > s1) continue;
    if (c.arity() == 1) {
      for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> v(n);
        for (std::size_t x = 0; x < n; ++x) v[x] = c(base[i][x], 0.0);
        add(std::move(v), base[i].label + ComplexityLabel{0, c.gates},
            c.name() + "(" + base[i].descriptor + ")");
      }
    } else {
      // Every binary shape in the catalog is symmetric, so i < j suffices.
      for (std::size_t i = 0; i < base.size(); ++i) {
        for (std::size_t j = i + 1; j < base.size(); ++j) {
          std::vector<double> v(n);
          for (std::size_t x = 0; x < n; ++x) v[x] = c(base[i][x], base[j][x]);
          add(std::move(v),
              base[i].label + base[j].label + ComplexityLabel{0, c.gates},
              c.name() + "(" + base[i].descriptor + "," + base[j].descriptor + ")");
        }
      }
    }
  }
  return Family(std::move(out), base.label().join({s1, s2}));
}

}  // namespace regsim
