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

// Potential-driven boosting of simulators: multiaccuracy, calibrated
// multiaccuracy and multicalibration, plus from-scratch audits of each.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regsim/core.hpp"
#include "regsim/distinguishers.hpp"

namespace regsim {

// Largest power of two not exceeding x (x > 0).
inline double dyadic_floor(double x) {
  if (!(x > 0.0)) throw InvalidArgument("dyadic_floor needs a positive value");
  int e = 0;
  std::frexp(x, &e);  // x = m * 2^e with m in [0.5, 1)
  double p = std::ldexp(1.0, e - 1);
  while (p > x) p *= 0.5;
  return p;
}

// Nearest multiple of `grid`, ties to even.
inline double round_to_grid(double v, double grid) {
  return std::nearbyint(v / grid) * grid;
}

inline std::uint64_t ceil_log2_inv(double grid) {
  return static_cast<std::uint64_t>(std::ceil(std::log2(1.0 / grid) - 1e-12));
}

// Gate cost of one grid-rounded update: ⌈log2(1/grid)⌉².
inline std::uint64_t rounding_gates(double grid) {
  const std::uint64_t b = ceil_log2_inv(grid);
  return b * b;
}

// Gate cost of one recalibration lookup table over a gamma-grid.
inline std::uint64_t recalibration_gates(double gamma, double grid) {
  return static_cast<std::uint64_t>(std::ceil(1.0 / gamma - 1e-12)) *
         ceil_log2_inv(grid);
}

struct BoostParams {
  double epsilon = 0.1;
  double round_grid = 0.0;    // 0 selects the default dyadic floor of eps^10
  std::size_t max_iters = 0;  // 0 selects 4x the update bound
  std::optional<double> gamma;

  void validate() const {
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
      throw InvalidArgument("epsilon must lie in (0, 0.5)");
    }
    if (round_grid != 0.0 &&
        !(round_grid > 0.0 && round_grid <= std::pow(epsilon, 10))) {
      throw InvalidArgument("round_grid must lie in (0, epsilon^10]");
    }
    if (gamma && !(*gamma > 0.0 && *gamma <= epsilon)) {
      throw InvalidArgument("gamma must lie in (0, epsilon]");
    }
  }

  double grid() const {
    return round_grid > 0.0 ? round_grid : dyadic_floor(std::pow(epsilon, 10));
  }

  // ⌈1/(3ε²)⌉ + 1: Φ starts at most 1/4 and each update drops it by ¾ε².
  std::size_t update_bound() const {
    return static_cast<std::size_t>(std::ceil(1.0 / (3.0 * epsilon * epsilon))) + 1;
  }

  std::size_t iteration_cap() const {
    return max_iters > 0 ? max_iters : 4 * update_bound();
  }
};

struct IterationRecord {
  enum class Kind { kUpdate, kRecalibrate, kLevelFix };
  std::size_t index = 0;
  Kind kind = Kind::kUpdate;
  std::size_t member = 0;
  std::string descriptor;
  int sign = 0;
  double correlation = 0.0;
  double step = 0.0;
  std::optional<double> level_value;  // level set touched (multicalibration)
  double level_mass = 0.0;
  double phi_before = 0.0;
  double phi_after = 0.0;
  double phi_bound = 0.0;  // a-priori ceiling on phi_after
  std::uint64_t digest = 0;

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::kUpdate:
        return "update";
      case Kind::kRecalibrate:
        return "recalibrate";
      case Kind::kLevelFix:
        return "level_fix";
    }
    return "?";
  }
};

struct BoostTrace {
  std::vector<IterationRecord> iterations;
  std::size_t updates = 0;
  std::size_t recalibrations = 0;
  std::string termination;
  ComplexityLabel label{1, 1};
  std::vector<std::size_t> used_members;  // family index per update
  double epsilon = 0.0;
  double grid = 0.0;
  std::optional<double> gamma;

  double final_phi(double initial) const {
    return iterations.empty() ? initial : iterations.back().phi_after;
  }
};

struct Simulation {
  BoundedFn predictor;
  BoostTrace trace;
};

namespace detail {

inline void check_potential_law(const IterationRecord& r) {
  if (r.phi_after > r.phi_bound + kDerivedTol) {
    throw ContractViolation(
        "potential law violated at iteration " + std::to_string(r.index) +
        ": phi " + std::to_string(r.phi_after) + " exceeds bound " +
        std::to_string(r.phi_bound));
  }
}

inline void require_target(const BoundedFn& g, const Distribution& d) {
  detail::require_same_size("target", g.size(), d.size());
}

// One multiaccuracy step h <- round(clip(h + eps*sigma*f), grid); records
// the potential before and after and checks the per-step law
// Φ' <= Φ - 2ε·corr + ε² + 2ε'.
inline BoundedFn boost_step(const BoundedFn& g, const BoundedFn& h,
                            const Distribution& d, const BestResponse& br,
                            double eps, double grid, IterationRecord& rec) {
  std::vector<double> next(h.size());
  const Distinguisher& f = *br.distinguisher;
  for (std::size_t x = 0; x < h.size(); ++x) {
    const double moved = std::clamp(h[x] + eps * br.sign * f[x], 0.0, 1.0);
    next[x] = std::clamp(round_to_grid(moved, grid), 0.0, 1.0);
  }
  BoundedFn out(std::move(next));
  rec.kind = IterationRecord::Kind::kUpdate;
  rec.member = br.index;
  rec.descriptor = f.descriptor;
  rec.sign = br.sign;
  rec.correlation = br.correlation;
  rec.step = eps;
  rec.phi_before = potential(g, h, d);
  rec.phi_after = potential(g, out, d);
  rec.phi_bound = rec.phi_before - 2.0 * eps * br.correlation + eps * eps + 2.0 * grid;
  rec.digest = digest(out.values());
  check_potential_law(rec);
  return out;
}

}  // namespace detail

// Boosts h0 = 1/2 until no member of the family correlates with the residual
// by more than epsilon.
inline Simulation multiaccuracy_boost(const BoundedFn& g, const Distribution& d,
                                      const Family& fam, const BoostParams& params) {
  params.validate();
  detail::require_target(g, d);
  const double eps = params.epsilon;
  const double grid = params.grid();
  const std::uint64_t gates = rounding_gates(grid);

  BoundedFn h = BoundedFn::constant(d.size(), 0.5);
  BoostTrace trace;
  trace.epsilon = eps;
  trace.grid = grid;
  for (;;) {
    const BestResponse br = best_response(fam, g, h, d);
    if (br.correlation <= eps + kDerivedTol) {
      trace.termination = "regular";
      break;
    }
    if (trace.updates >= params.iteration_cap()) {
      throw ContractViolation("multiaccuracy_boost exceeded max_iters = " +
                              std::to_string(params.iteration_cap()));
    }
    IterationRecord rec;
    rec.index = trace.iterations.size();
    h = detail::boost_step(g, h, d, br, eps, grid, rec);
    trace.iterations.push_back(rec);
    trace.used_members.push_back(br.index);
    trace.label = trace.label + fam[br.index].label + ComplexityLabel{0, gates};
    ++trace.updates;
  }
  return {std::move(h), std::move(trace)};
}

// Signed residual mass E[1[h = v](g - h)] per exact value v of h.
struct LevelMass {
  double value = 0.0;
  double mass = 0.0;      // Pr[h = v]
  double residual = 0.0;  // E[1[h = v](g - h)]
};

inline std::vector<LevelMass> level_masses(const BoundedFn& g, const BoundedFn& h,
                                           const Distribution& d) {
  detail::require_same_size("level_masses", g.size(), d.size());
  detail::require_same_size("level_masses", h.size(), d.size());
  std::map<double, LevelMass> levels;
  for (std::size_t x = 0; x < d.size(); ++x) {
    auto& lv = levels[h[x]];
    lv.value = h[x];
    lv.mass += d[x];
    lv.residual += d[x] * (g[x] - h[x]);
  }
  std::vector<LevelMass> out;
  for (auto& [v, lv] : levels) out.push_back(lv);
  return out;
}

// sup over w: [0,1] -> [0,1] of |E[w(h)(g - h)]|. The maximiser puts w = 1
// on all levels of one residual sign, so the sup is the larger of the
// positive and negative residual totals.
inline double calibration_error(const BoundedFn& g, const BoundedFn& h,
                                const Distribution& d) {
  double pos = 0.0;
  double neg = 0.0;
  for (const auto& lv : level_masses(g, h, d)) {
    if (lv.residual > 0.0) pos += lv.residual;
    else neg -= lv.residual;
  }
  return std::max(pos, neg);
}

// Replaces h on each level set by the conditional mean of g there, rounded
// to the `grid` (default gamma) and clamped to [0,1]. Zero-mass levels are
// left as they are.
inline BoundedFn recalibrate(const BoundedFn& g, const BoundedFn& h,
                             const Distribution& d, double gamma,
                             double grid = 0.0) {
  if (!(gamma > 0.0)) throw InvalidArgument("gamma must be positive");
  if (grid <= 0.0) grid = gamma;
  detail::require_same_size("recalibrate", g.size(), d.size());
  detail::require_same_size("recalibrate", h.size(), d.size());
  std::map<double, std::pair<double, double>> acc;  // value -> (mass, E[1 g])
  for (std::size_t x = 0; x < d.size(); ++x) {
    auto& a = acc[h[x]];
    a.first += d[x];
    a.second += d[x] * g[x];
  }
  std::map<double, double> target;
  for (const auto& [v, a] : acc) {
    if (a.first > 0.0) {
      target[v] = std::clamp(round_to_grid(a.second / a.first, grid), 0.0, 1.0);
    } else {
      target[v] = v;
    }
  }
  std::vector<double> out(h.size());
  for (std::size_t x = 0; x < h.size(); ++x) out[x] = target[h[x]];
  return BoundedFn(std::move(out));
}

// Alternates recalibration with multiaccuracy updates until the recalibrated
// predictor is also epsilon-multiaccurate.
inline Simulation calibrated_multiaccuracy(const BoundedFn& g, const Distribution& d,
                                           const Family& fam, const BoostParams& params) {
  params.validate();
  if (!params.gamma) throw InvalidArgument("calibrated_multiaccuracy needs gamma");
  detail::require_target(g, d);
  const double eps = params.epsilon;
  const double gamma = *params.gamma;
  const double grid = params.grid();
  const std::uint64_t gates = rounding_gates(grid);
  const std::uint64_t recal_gates = recalibration_gates(gamma, grid);

  BoundedFn h = BoundedFn::constant(d.size(), 0.5);
  BoostTrace trace;
  trace.epsilon = eps;
  trace.grid = grid;
  trace.gamma = gamma;
  trace.label = trace.label + ComplexityLabel{0, recal_gates};
  for (;;) {
    IterationRecord rec;
    rec.index = trace.iterations.size();
    rec.kind = IterationRecord::Kind::kRecalibrate;
    rec.step = gamma;
    rec.phi_before = potential(g, h, d);
    h = recalibrate(g, h, d, gamma);
    rec.phi_after = potential(g, h, d);
    // Projection onto level-set means cannot raise Φ; rounding each mean by
    // at most gamma/2 adds at most gamma²/4.
    rec.phi_bound = rec.phi_before + gamma * gamma / 4.0;
    rec.digest = digest(h.values());
    detail::check_potential_law(rec);
    trace.iterations.push_back(rec);
    ++trace.recalibrations;

    const BestResponse br = best_response(fam, g, h, d);
    if (br.correlation <= eps + kDerivedTol) {
      trace.termination = "regular_and_calibrated";
      break;
    }
    if (trace.updates >= params.iteration_cap()) {
      throw ContractViolation("calibrated_multiaccuracy exceeded max_iters = " +
                              std::to_string(params.iteration_cap()));
    }
    IterationRecord up;
    up.index = trace.iterations.size();
    h = detail::boost_step(g, h, d, br, eps, grid, up);
    trace.iterations.push_back(up);
    trace.used_members.push_back(br.index);
    trace.label = trace.label + fam[br.index].label +
                  ComplexityLabel{0, gates + recal_gates};
    ++trace.updates;
  }
  return {std::move(h), std::move(trace)};
}

struct LevelAudit {
  double value = 0.0;
  double mass = 0.0;
  double max_error = 0.0;  // max_f |E[f (g - h) | h = v]|
  std::size_t witness = 0;
  int sign = 1;
  bool violating = false;
};

struct AuditReport {
  double epsilon = 0.0;
  double multiaccuracy_error = 0.0;
  std::size_t multiaccuracy_witness = 0;
  int multiaccuracy_sign = 1;
  double calibration_error = 0.0;
  double bad_mass = 0.0;
  std::vector<LevelAudit> levels;
  bool multicalibrated = false;
};

// Every audit recomputed from (g, h, D, F) with no access to how h was built.
inline AuditReport audit(const BoundedFn& g, const BoundedFn& h,
                         const Distribution& d, const Family& fam, double eps) {
  AuditReport r;
  r.epsilon = eps;
  const BestResponse br = best_response(fam, g, h, d);
  r.multiaccuracy_error = br.correlation;
  r.multiaccuracy_witness = br.index;
  r.multiaccuracy_sign = br.sign;
  r.calibration_error = calibration_error(g, h, d);

  std::map<double, std::vector<std::size_t>> sets;
  for (std::size_t x = 0; x < d.size(); ++x) sets[h[x]].push_back(x);
  for (const auto& [v, xs] : sets) {
    LevelAudit la;
    la.value = v;
    for (std::size_t x : xs) la.mass += d[x];
    if (la.mass > 0.0) {
      for (std::size_t j = 0; j < fam.size(); ++j) {
        double s = 0.0;
        for (std::size_t x : xs) s += d[x] * fam[j][x] * (g[x] - h[x]);
        const double c = s / la.mass;
        if (std::abs(c) > la.max_error) {
          la.max_error = std::abs(c);
          la.witness = j;
          la.sign = c >= 0.0 ? 1 : -1;
        }
      }
    }
    la.violating = la.max_error > eps;
    if (la.violating) r.bad_mass += la.mass;
    r.levels.push_back(la);
  }
  r.multicalibrated = r.bad_mass <= eps;
  return r;
}

struct MulticalibrationCheck {
  bool passed = false;
  AuditReport report;
};

inline MulticalibrationCheck multicalibration_check(const BoundedFn& g,
                                                    const BoundedFn& h,
                                                    const Distribution& d,
                                                    const Family& fam, double eps) {
  AuditReport r = audit(g, h, d, fam, eps);
  return {r.multicalibrated, std::move(r)};
}

// Patches one violating level set at a time until the violating mass is at
// most epsilon. Values live on a dyadic grid of width at most ε²/2, and each
// patch takes the exact line-search step on the chosen level set.
inline Simulation multicalibrate(const BoundedFn& g, const Distribution& d,
                                 const Family& fam, double eps,
                                 std::size_t max_iters = 0) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("epsilon must lie in (0, 1)");
  detail::require_target(g, d);
  const double lambda = dyadic_floor(eps * eps / 2.0);
  const std::size_t cap =
      max_iters > 0 ? max_iters
                    : 4 * static_cast<std::size_t>(std::ceil(1.0 / std::pow(eps, 4)));
  const std::uint64_t gates = rounding_gates(lambda);

  BoundedFn h = BoundedFn::constant(d.size(), 0.5);
  BoostTrace trace;
  trace.epsilon = eps;
  trace.grid = lambda;
  for (;;) {
    const AuditReport r = audit(g, h, d, fam, eps);
    if (r.multicalibrated) {
      trace.termination = "multicalibrated";
      break;
    }
    if (trace.updates >= cap) {
      throw ContractViolation("multicalibrate exceeded max_iters = " +
                              std::to_string(cap));
    }
    const LevelAudit* pick = nullptr;
    for (const auto& la : r.levels) {
      if (!la.violating) continue;
      if (!pick || la.mass * la.max_error * la.max_error >
                       pick->mass * pick->max_error * pick->max_error) {
        pick = &la;
      }
    }
    const Distinguisher& f = fam[pick->witness];
    const double c = pick->sign * pick->max_error;
    double f2 = 0.0;
    for (std::size_t x = 0; x < d.size(); ++x) {
      if (h[x] == pick->value) f2 += d[x] * f[x] * f[x];
    }
    f2 /= pick->mass;
    const double eta = c / f2;

    IterationRecord rec;
    rec.index = trace.iterations.size();
    rec.kind = IterationRecord::Kind::kLevelFix;
    rec.member = pick->witness;
    rec.descriptor = f.descriptor;
    rec.sign = pick->sign;
    rec.correlation = pick->max_error;
    rec.step = eta;
    rec.level_value = pick->value;
    rec.level_mass = pick->mass;
    rec.phi_before = potential(g, h, d);
    std::vector<double> next(h.values().begin(), h.values().end());
    for (std::size_t x = 0; x < d.size(); ++x) {
      if (h[x] == pick->value) {
        next[x] = std::clamp(
            round_to_grid(std::clamp(h[x] + eta * f[x], 0.0, 1.0), lambda), 0.0, 1.0);
      }
    }
    h = BoundedFn(std::move(next));
    rec.phi_after = potential(g, h, d);
    // Line search removes mass*c²/E[f²|S] ≥ mass*c²; clipping only helps;
    // rounding by λ/2 costs at most mass*(λ + λ²/4).
    rec.phi_bound = rec.phi_before -
                    pick->mass * (c * c - lambda - lambda * lambda / 4.0);
    rec.digest = digest(h.values());
    detail::check_potential_law(rec);
    trace.iterations.push_back(rec);
    trace.used_members.push_back(pick->witness);
    trace.label = trace.label + f.label + ComplexityLabel{0, gates};
    ++trace.updates;
  }
  return {std::move(h), std::move(trace)};
}

}  // namespace regsim
