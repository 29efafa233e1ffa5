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

// Supersimulators: predictors at some ladder level s that fool the larger
// family at level G(s).
//
// A predictor's level is the highest ladder level it actually draws on: each
// distinguisher used in an update is charged at the lowest level containing
// it. The expanding construction boosts against ladder[G(level)] and lets the
// level rise as needed. The shrinking construction rebuilds a calibrated
// predictor from scratch each round against the family above the previous
// one and stops once the potential stalls.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "regsim/core.hpp"
#include "regsim/distinguishers.hpp"
#include "regsim/regularity.hpp"

namespace regsim {

enum class RecurrenceMode { kExpanding, kShrinking };

struct RecurrenceStep {
  std::size_t index = 0;  // ladder index reached after this many rounds
  ComplexityLabel label;
  bool exhausted = false;  // growth ran past the ladder; index clamped to top
};

// Additive post-processing charge per round: ⌈log2(1/ε')⌉².
inline std::uint64_t recurrence_log_term(double eps) {
  return rounding_gates(dyadic_floor(std::pow(eps, 10)));
}

// The a-priori level sequence I_0 = 0, I_{i+1} = G(I_i) on the ladder, with
// the matching label recurrence:
//   expanding: S_{i+1} = S_i + label(G(I_i)) + (0, c_log)
//   shrinking: S_{i+1} = (1,1) + u_i·(label(G(I_i)) + (0, c_log))
//              + (u_i + 1)·(0, c_recal),  u_i = ⌈1/(3ε_i²)⌉ + 1
// S_0 = (1,1), plus one recalibration table when `calibrated`.
inline std::vector<RecurrenceStep> ladder_recurrence(
    const GradedLadder& ladder, const GrowthMap& g, std::size_t rounds,
    RecurrenceMode mode, const ErrorSchedule& eps, bool calibrated = false) {
  std::vector<RecurrenceStep> out;
  RecurrenceStep s;
  s.label = {1, 1};
  if (calibrated) {
    const double e = eps.at(0);
    s.label = s.label + ComplexityLabel{0, recalibration_gates(e, dyadic_floor(std::pow(e, 10)))};
  }
  out.push_back(s);
  for (std::size_t i = 0; i < rounds; ++i) {
    const RecurrenceStep& prev = out.back();
    RecurrenceStep next;
    std::size_t image = g.map(prev.index);
    next.exhausted = prev.exhausted;
    if (image > ladder.top()) {
      image = ladder.top();
      next.exhausted = true;
    }
    next.index = image;
    const double e = eps.at(prev.index);
    const double grid = dyadic_floor(std::pow(e, 10));
    const ComplexityLabel step = ladder.label(image) + ComplexityLabel{0, rounding_gates(grid)};
    if (mode == RecurrenceMode::kExpanding) {
      next.label = prev.label + step;
      if (calibrated) next.label = next.label + ComplexityLabel{0, recalibration_gates(e, grid)};
    } else {
      const auto u = static_cast<std::uint64_t>(std::ceil(1.0 / (3.0 * e * e))) + 1;
      next.label = ComplexityLabel{1, 1} + step.scaled(u) +
                   ComplexityLabel{0, recalibration_gates(e, grid)}.scaled(u + 1);
    }
    out.push_back(next);
  }
  return out;
}

// Growth expressed directly on labels.
using LabelGrowth = std::function<ComplexityLabel(const ComplexityLabel&)>;

// The formal label sequence for a growth function on the lattice itself,
// independent of any ladder. Saturation is carried on each label.
inline std::vector<ComplexityLabel> recurrence_bound(const LabelGrowth& g,
                                                     const ErrorSchedule& eps,
                                                     std::size_t rounds,
                                                     RecurrenceMode mode) {
  std::vector<ComplexityLabel> out{ComplexityLabel{1, 1}};
  for (std::size_t i = 0; i < rounds; ++i) {
    const ComplexityLabel& prev = out.back();
    const double e = eps.at(i);
    const double grid = dyadic_floor(std::pow(e, 10));
    const ComplexityLabel step = g(prev) + ComplexityLabel{0, rounding_gates(grid)};
    if (mode == RecurrenceMode::kExpanding) {
      out.push_back(prev + step);
    } else {
      const auto u = static_cast<std::uint64_t>(std::ceil(1.0 / (3.0 * e * e))) + 1;
      out.push_back(ComplexityLabel{1, 1} + step.scaled(u) +
                    ComplexityLabel{0, recalibration_gates(e, grid)}.scaled(u + 1));
    }
  }
  return out;
}

inline std::vector<ComplexityLabel> recurrence_bound(const LabelGrowth& g, double eps,
                                                     std::size_t rounds,
                                                     RecurrenceMode mode) {
  return recurrence_bound(g, ErrorSchedule::constant(eps), rounds, mode);
}

struct SupersimOptions {
  std::optional<double> gamma;  // recalibrate after every update when set
  double round_grid = 0.0;
  std::size_t max_iters = 0;
};

struct SupersimResult {
  BoundedFn predictor;
  std::size_t level = 0;
  ComplexityLabel level_label;
  std::size_t fooled_level = 0;
  BoostTrace trace;
  std::vector<std::size_t> level_history;  // level before each update, then final
  std::vector<RecurrenceStep> recurrence;
  std::size_t bound_round = 0;  // ⌊1/(3ε²)⌋
  std::size_t bound_level = 0;  // recurrence index at bound_round
  double epsilon = 0.0;
};

// Boosts h0 = 1/2 against ladder[G(level)], where level tracks the highest
// ladder level drawn on so far, until nothing there correlates above eps.
inline SupersimResult supersimulator_expanding(const BoundedFn& g, const Distribution& d,
                                               const GradedLadder& ladder,
                                               const GrowthMap& growth, double eps,
                                               const SupersimOptions& opt = {}) {
  BoostParams params{eps, opt.round_grid, opt.max_iters, opt.gamma};
  params.validate();
  detail::require_target(g, d);
  detail::require_same_size("supersimulator", ladder[0].domain_size(), d.size());
  const double grid = params.grid();
  const std::uint64_t gates = rounding_gates(grid);
  const std::uint64_t recal_gates = opt.gamma ? recalibration_gates(*opt.gamma, grid) : 0;

  SupersimResult res;
  res.epsilon = eps;
  res.trace.epsilon = eps;
  res.trace.grid = grid;
  res.trace.gamma = opt.gamma;
  res.trace.label = res.trace.label + ComplexityLabel{0, recal_gates};

  BoundedFn h = BoundedFn::constant(d.size(), 0.5);
  auto recal = [&] {
    IterationRecord rec;
    rec.index = res.trace.iterations.size();
    rec.kind = IterationRecord::Kind::kRecalibrate;
    rec.step = *opt.gamma;
    rec.phi_before = potential(g, h, d);
    h = recalibrate(g, h, d, *opt.gamma);
    rec.phi_after = potential(g, h, d);
    rec.phi_bound = rec.phi_before + *opt.gamma * *opt.gamma / 4.0;
    rec.digest = digest(h.values());
    detail::check_potential_law(rec);
    res.trace.iterations.push_back(rec);
    ++res.trace.recalibrations;
  };
  if (opt.gamma) recal();

  std::size_t level = 0;
  for (;;) {
    std::size_t fooled = 0;
    try {
      fooled = apply_growth(growth, level, ladder);
    } catch (const LadderExhausted& e) {
      throw LadderExhausted(std::string(e.what()) + " after " +
                            std::to_string(res.trace.updates) + " updates at level " +
                            std::to_string(level) + " (phi " +
                            std::to_string(potential(g, h, d)) + ")");
    }
    res.level_history.push_back(level);
    const BestResponse br = best_response(ladder[fooled], g, h, d);
    if (br.correlation <= eps + kDerivedTol) {
      res.fooled_level = fooled;
      res.trace.termination = opt.gamma ? "regular_and_calibrated" : "regular";
      break;
    }
    if (res.trace.updates >= params.iteration_cap()) {
      throw ContractViolation("supersimulator exceeded max_iters = " +
                              std::to_string(params.iteration_cap()));
    }
    IterationRecord rec;
    rec.index = res.trace.iterations.size();
    h = detail::boost_step(g, h, d, br, eps, grid, rec);
    res.trace.iterations.push_back(rec);
    res.trace.used_members.push_back(br.index);
    res.trace.label = res.trace.label + ladder[fooled][br.index].label +
                      ComplexityLabel{0, gates + recal_gates};
    ++res.trace.updates;
    level = std::max(level, ladder.first_level(fooled, br.index));
    if (opt.gamma) recal();
  }

  res.predictor = std::move(h);
  res.level = level;
  res.level_label = ladder.label(level);
  res.bound_round = static_cast<std::size_t>(std::floor(1.0 / (3.0 * eps * eps)));
  res.recurrence = ladder_recurrence(ladder, growth, res.bound_round,
                                     RecurrenceMode::kExpanding,
                                     ErrorSchedule::constant(eps), opt.gamma.has_value());
  res.bound_level = res.recurrence.back().index;
  if (res.trace.updates > params.update_bound()) {
    throw ContractViolation("supersimulator used " + std::to_string(res.trace.updates) +
                            " updates, above the bound " +
                            std::to_string(params.update_bound()));
  }
  if (res.level > res.bound_level) {
    throw ContractViolation("measured level " + std::to_string(res.level) +
                            " exceeds the recurrence bound " +
                            std::to_string(res.bound_level));
  }
  return res;
}

struct ShrinkingRound {
  std::size_t level = 0;         // level of the predictor entering the round
  std::size_t fooled_level = 0;  // G(level)
  double eps = 0.0;
  double phi = 0.0;              // potential of the entering predictor
  BoostTrace trace;              // construction of the next predictor
};

struct PairResult {
  BoundedFn h;
  BoundedFn h_prime;
  std::size_t level = 0;
  std::size_t level_prime = 0;
  ComplexityLabel label;
  ComplexityLabel label_prime;
  std::size_t fooled_level = 0;
  std::size_t round = 0;
  double eps_s = 0.0;
  double phi = 0.0;
  double phi_next = 0.0;
  double gap = 0.0;  // phi - phi_next
  double similarity = 0.0;
  double cross_term = 0.0;  // E[(h - h')(g - h')]
  double identity_residual = 0.0;
  double similarity_bound = 0.0;  // gap + 4 eps_s
  double alpha = 0.0;
  std::size_t bound_index = 0;        // ⌊1/α⌋
  std::size_t bound_index_loose = 0;  // ⌊1/α⌋ + 1
  std::size_t bound_level = 0;
  std::size_t bound_level_loose = 0;
  std::vector<ShrinkingRound> rounds;
  std::vector<RecurrenceStep> recurrence;
};

// Rebuilds a calibrated, regular predictor each round against the ladder
// level above the previous predictor (with that predictor added to the
// family) and returns the first consecutive pair whose potential gap is at
// most alpha.
inline PairResult supersimulator_shrinking(const BoundedFn& g, const Distribution& d,
                                           const GradedLadder& ladder,
                                           const GrowthMap& growth,
                                           const ErrorSchedule& schedule, double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw InvalidArgument("alpha must lie in (0, 0.5)");
  detail::require_target(g, d);
  detail::require_same_size("supersimulator", ladder[0].domain_size(), d.size());
  const std::size_t max_rounds = static_cast<std::size_t>(std::ceil(1.0 / alpha)) + 1;

  PairResult res;
  res.alpha = alpha;
  BoundedFn h = BoundedFn::constant(d.size(), 0.5);
  std::size_t level = 0;
  for (std::size_t i = 0;; ++i) {
    if (i >= max_rounds) {
      throw ContractViolation("no potential gap <= alpha within " +
                              std::to_string(max_rounds) + " rounds");
    }
    const std::size_t fooled = apply_growth(growth, level, ladder);
    const double eps = schedule.at(level);
    const Family& base = ladder[fooled];
    const Distinguisher self{h, ladder.label(level), "previous predictor"};
    const Family fam = base.with(std::span<const Distinguisher>(&self, 1));

    BoostParams params;
    params.epsilon = eps;
    params.gamma = eps;
    Simulation next = calibrated_multiaccuracy(g, d, fam, params);

    std::size_t next_level = 0;
    for (std::size_t m : next.trace.used_members) {
      next_level = std::max(next_level, m < base.size() ? ladder.first_level(fooled, m)
                                                        : level);
    }
    ShrinkingRound round;
    round.level = level;
    round.fooled_level = fooled;
    round.eps = eps;
    round.phi = potential(g, h, d);
    round.trace = next.trace;
    res.rounds.push_back(std::move(round));

    const double phi = potential(g, h, d);
    const double phi_next = potential(g, next.predictor, d);
    if (phi - phi_next <= alpha) {
      res.h = h;
      res.h_prime = std::move(next.predictor);
      res.level = level;
      res.level_prime = next_level;
      res.label = ladder.label(level);
      res.label_prime = ladder.label(next_level);
      res.fooled_level = fooled;
      res.round = i;
      res.eps_s = eps;
      res.phi = phi;
      res.phi_next = phi_next;
      res.gap = phi - phi_next;
      break;
    }
    h = std::move(next.predictor);
    level = next_level;
  }

  double sim = 0.0;
  double cross = 0.0;
  for (std::size_t x = 0; x < d.size(); ++x) {
    const double diff = res.h[x] - res.h_prime[x];
    sim += d[x] * diff * diff;
    cross += d[x] * diff * (g[x] - res.h_prime[x]);
  }
  res.similarity = sim;
  res.cross_term = cross;
  // E(h - h')² = Φ(h) - Φ(h') + 2E[(h - h')(g - h')]
  res.identity_residual = std::abs(sim - (res.gap + 2.0 * cross));
  res.similarity_bound = res.gap + 4.0 * res.eps_s;
  if (res.identity_residual > kDerivedTol) {
    throw ContractViolation("similarity identity off by " +
                            std::to_string(res.identity_residual));
  }
  if (sim > res.similarity_bound + kDerivedTol) {
    throw ContractViolation("similarity " + std::to_string(sim) + " exceeds bound " +
                            std::to_string(res.similarity_bound));
  }

  res.bound_index = static_cast<std::size_t>(std::floor(1.0 / alpha));
  res.bound_index_loose = res.bound_index + 1;
  res.recurrence = ladder_recurrence(ladder, growth, res.bound_index_loose,
                                     RecurrenceMode::kShrinking, schedule, true);
  res.bound_level = res.recurrence[res.bound_index].index;
  res.bound_level_loose = res.recurrence[res.bound_index_loose].index;
  if (res.level > res.bound_level || res.level_prime > res.bound_level_loose) {
    throw ContractViolation("pair levels exceed the recurrence bound");
  }
  return res;
}

struct CorollaryCheck {
  bool passed = false;
  double measured = 0.0;  // multiaccuracy error of h against ladder[G(s)]
  double bound = 0.0;     // ε(s) + 2β^{1/3}
  double beta = 0.0;
};

// The first predictor of the pair is itself nearly regular: its error
// against ladder[G(s)] exceeds ε(s) by at most 2·β^{1/3}, β = E(h - h')².
inline CorollaryCheck corollary_check(const BoundedFn& g, const Distribution& d,
                                      const PairResult& pair, const GradedLadder& ladder,
                                      const GrowthMap& growth) {
  CorollaryCheck c;
  c.beta = pair.similarity;
  c.bound = pair.eps_s + 2.0 * std::cbrt(c.beta);
  const std::size_t fooled = apply_growth(growth, pair.level, ladder);
  c.measured = best_response(ladder[fooled], g, pair.h, d).correlation;
  c.passed = c.measured <= c.bound + kDerivedTol;
  return c;
}

}  // namespace regsim
