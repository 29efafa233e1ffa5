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

// JSON-configured experiments: validation with field paths, construction of
// every input, dispatch to the selected pipeline, and the run report.
//
// Exit codes: 0 every asserted inequality holds, 2 some inequality fails,
// 1 bad configuration or unmet precondition/hypothesis, 3 internal contract
// violation.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "regsim/core.hpp"
#include "regsim/distinguishers.hpp"
#include "regsim/products.hpp"
#include "regsim/regularity.hpp"
#include "regsim/serialize.hpp"
#include "regsim/supersim.hpp"

namespace regsim::experiment {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 1, kInequalityFailed = 2, kContract = 3 };

struct Diagnostic {
  std::string path;
  std::string message;

  std::string str() const { return path + ": " + message; }
};

inline const std::vector<std::string>& algorithms() {
  static const std::vector<std::string> names = {
      "boost",           "calibrated",      "multicalibrate",
      "supersim-expanding", "supersim-shrinking", "verify-balanced",
      "verify-tilted",   "characterize",    "characterize-super",
      "gap-closure"};
  return names;
}

// Nonnegative integer, whether stored signed or unsigned.
inline bool is_count(const Json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

// Everything a pipeline needs, built from a config.
struct Plan {
  std::string algorithm;
  std::size_t n = 0;
  std::optional<unsigned> bit_width;
  std::optional<Distribution> d, d0, d1;
  std::optional<BoundedFn> target;
  std::optional<Family> family;
  std::optional<GradedLadder> ladder;
  std::optional<GrowthMap> growth;
  std::optional<ErrorSchedule> schedule;
  double epsilon = 0.0;
  std::optional<double> gamma;
  std::optional<double> alpha;
  std::size_t k = 1;
  std::size_t max_iters = 0;
  double round_grid = 0.0;
  ProxyMode mode = ProxyMode::kTwoProxy;
  Json predictor;  // verify-*: {"kind": "calibrated" | "target" | "explicit"}
};

// Walks a config, building objects and recording every problem found.
class Builder {
 public:
  Builder(const Json& cfg, std::optional<std::uint64_t> seed_override = std::nullopt)
      : cfg_(cfg) {
    if (seed_override) {
      seed_ = *seed_override;
    } else if (cfg.is_object() && cfg.contains("seed")) {
      if (is_count(cfg["seed"])) {
        seed_ = cfg["seed"].get<std::uint64_t>();
      } else {
        error("seed", "seed must be a nonnegative integer");
      }
    }
    rng_.seed(seed_.value_or(0));
  }

  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

  Plan build() {
    Plan plan;
    if (!cfg_.is_object()) {
      error("", "config must be a JSON object");
      return plan;
    }
    check_keys(cfg_, "", {"algorithm", "seed", "domain", "distributions", "target",
                          "family", "ladder", "growth", "params", "predictor", "output",
                          "description"});
    // algorithm
    if (!cfg_.contains("algorithm") || !cfg_["algorithm"].is_string()) {
      error("algorithm", "algorithm is required (one of " + join(algorithms()) + ")");
      return plan;
    }
    plan.algorithm = cfg_["algorithm"].get<std::string>();
    if (std::find(algorithms().begin(), algorithms().end(), plan.algorithm) ==
        algorithms().end()) {
      error("algorithm", "unknown algorithm '" + plan.algorithm + "' (expected one of " +
                             join(algorithms()) + ")");
      return plan;
    }
    const std::string& a = plan.algorithm;
    const bool single = a == "boost" || a == "calibrated" || a == "multicalibrate" ||
                        a == "supersim-expanding" || a == "supersim-shrinking";
    const bool uses_ladder = a == "supersim-expanding" || a == "supersim-shrinking" ||
                             a == "characterize-super" || a == "gap-closure";

    build_domain(plan);
    if (plan.n == 0) return plan;
    build_params(plan);

    // distributions
    const Json* dists = child(cfg_, "distributions", "");
    if (dists) check_keys(*dists, "distributions", {"D", "D0", "D1"});
    if (single) {
      plan.d = distribution(dists, "D", plan.n);
      plan.target = target(plan.n);
    } else {
      plan.d0 = distribution(dists, "D0", plan.n);
      plan.d1 = distribution(dists, "D1", plan.n);
      if (cfg_.contains("target")) error("target", "target is derived from D0/D1 for " + a);
    }

    if (uses_ladder) {
      build_ladder(plan);
      build_growth(plan);
      if (cfg_.contains("family")) error("family", a + " takes a ladder, not a family");
    } else {
      if (cfg_.contains("family")) {
        plan.family = family(cfg_["family"], "family", plan);
      } else {
        error("family", "family is required for " + a);
      }
      if (cfg_.contains("ladder")) error("ladder", a + " takes a family, not a ladder");
    }
    if (a == "verify-balanced" || a == "verify-tilted") {
      plan.predictor = cfg_.value("predictor", Json{{"kind", "calibrated"}});
      check_predictor(plan);
    } else if (cfg_.contains("predictor")) {
      error("predictor", "predictor is only used by verify-balanced and verify-tilted");
    }
    if (cfg_.contains("output")) {
      const Json& o = cfg_["output"];
      if (!o.is_object()) {
        error("output", "must be an object");
      } else {
        check_keys(o, "output", {"report", "trace"});
        for (const char* key : {"report", "trace"}) {
          if (o.contains(key) && !o[key].is_string()) {
            error(sub("output", key), std::string(key) + " must be a file path");
          }
        }
      }
    }
    if (rng_used_ && !seed_) {
      error("seed", "seed is required when a random generator is used");
    }
    return plan;
  }

 private:
  void error(const std::string& path, const std::string& msg) {
    diags_.push_back({path.empty() ? "$" : "$." + path, msg});
  }

  static std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  }

  static std::string sub(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  static std::string idx(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
  }

  void check_keys(const Json& node, const std::string& path,
                  std::initializer_list<const char*> allowed) {
    if (!node.is_object()) return;
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : node.items()) {
      if (!ok.count(key)) error(sub(path, key), "unknown field '" + key + "'");
    }
  }

  const Json* child(const Json& node, const char* key, const std::string& path) {
    if (!node.contains(key)) return nullptr;
    const Json& c = node[key];
    if (!c.is_object()) {
      error(sub(path, key), "must be an object");
      return nullptr;
    }
    return &c;
  }

  std::optional<double> number(const Json& node, const char* key, const std::string& path,
                               bool required) {
    if (!node.is_object() || !node.contains(key)) {
      if (required) error(sub(path, key), std::string(key) + " is required");
      return std::nullopt;
    }
    if (!node[key].is_number()) {
      error(sub(path, key), std::string(key) + " must be a number");
      return std::nullopt;
    }
    return node[key].get<double>();
  }

  std::optional<std::vector<double>> numbers(const Json& node, const std::string& path) {
    if (!node.is_array()) {
      error(path, "must be an array of numbers");
      return std::nullopt;
    }
    std::vector<double> v;
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (!node[i].is_number()) {
        error(idx(path, i), "must be a number");
        return std::nullopt;
      }
      v.push_back(node[i].get<double>());
    }
    return v;
  }

  template <typename Fn>
  auto guard(const std::string& path, Fn&& fn) -> std::optional<decltype(fn())> {
    try {
      return fn();
    } catch (const Error& e) {
      error(path, e.what());
    } catch (const std::exception& e) {
      error(path, e.what());
    }
    return std::nullopt;
  }

  void build_domain(Plan& plan) {
    const Json* dom = child(cfg_, "domain", "");
    if (!dom) {
      error("domain", "domain is required");
      return;
    }
    check_keys(*dom, "domain", {"size", "bit_width"});
    std::optional<unsigned> bits;
    if (dom->contains("bit_width")) {
      if (!is_count((*dom)["bit_width"])) {
        error("domain.bit_width", "bit_width must be a nonnegative integer");
        return;
      }
      bits = (*dom)["bit_width"].get<unsigned>();
    }
    std::size_t size = 0;
    if (dom->contains("size")) {
      if (!is_count((*dom)["size"])) {
        error("domain.size", "size must be a positive integer");
        return;
      }
      size = (*dom)["size"].get<std::size_t>();
    } else if (bits && *bits < 20) {
      size = std::size_t{1} << *bits;
    } else {
      error("domain.size", "size is required");
      return;
    }
    auto fd = guard("domain", [&] { return FiniteDomain::make(size, bits); });
    if (!fd) return;
    plan.n = fd->size;
    plan.bit_width = fd->bit_width;
  }

  void build_params(Plan& plan) {
    const Json* p = child(cfg_, "params", "");
    if (!p) {
      error("params", "params is required");
      return;
    }
    check_keys(*p, "params", {"epsilon", "gamma", "alpha", "k", "schedule", "max_iters",
                              "round_grid", "mode"});
    const std::string& a = plan.algorithm;
    const bool needs_k = a == "verify-balanced" || a == "verify-tilted" ||
                         a == "characterize" || a == "characterize-super" ||
                         a == "gap-closure";
    const bool shrinking = a == "supersim-shrinking";

    auto eps = number(*p, "epsilon", "params", !shrinking || !p->contains("schedule"));
    if (eps) {
      plan.epsilon = *eps;
      const bool tilted = a == "verify-tilted";
      const double hi = (tilted || a == "multicalibrate") ? 1.0 : 0.5;
      if (!(*eps > 0.0 && *eps < hi)) {
        error("params.epsilon", hi == 0.5 ? "epsilon must lie in (0, 0.5)"
                                          : "epsilon must lie in (0, 1)");
      }
    }
    plan.gamma = number(*p, "gamma", "params", a == "calibrated" || a == "verify-balanced" ||
                                                  a == "verify-tilted");
    if (plan.gamma) {
      const double g = *plan.gamma;
      if (!(g > 0.0)) error("params.gamma", "gamma must be positive");
      if (a == "calibrated" && eps && !(g <= *eps)) {
        error("params.gamma", "gamma must lie in (0, epsilon]");
      }
      if (a == "verify-balanced" && !(g < 0.1)) error("params.gamma", "gamma must be < 0.1");
      if (a == "verify-tilted" && eps && !(g < *eps / 2.0)) {
        error("params.gamma", "gamma must be < epsilon/2");
      }
    }
    plan.alpha = number(*p, "alpha", "params", shrinking);
    if (plan.alpha && !(*plan.alpha > 0.0 && *plan.alpha < 0.5)) {
      error("params.alpha", "alpha must lie in (0, 0.5)");
    }
    if (p->contains("k")) {
      const Json& k = (*p)["k"];
      if (!k.is_number_integer() || k.get<long long>() < 1) {
        error("params.k", "k must be ≥ 1");
      } else {
        plan.k = k.get<std::size_t>();
      }
    } else if (needs_k) {
      error("params.k", "k is required for " + a);
    }
    if (p->contains("max_iters")) {
      if (!is_count((*p)["max_iters"])) {
        error("params.max_iters", "max_iters must be a nonnegative integer");
      } else {
        plan.max_iters = (*p)["max_iters"].get<std::size_t>();
      }
    }
    if (auto rg = number(*p, "round_grid", "params", false)) {
      plan.round_grid = *rg;
      if (eps && !(*rg > 0.0 && *rg <= std::pow(*eps, 10))) {
        error("params.round_grid", "round_grid must lie in (0, epsilon^10]");
      }
    }
    if (p->contains("mode")) {
      const Json& m = (*p)["mode"];
      if (m == "two-proxy") {
        plan.mode = ProxyMode::kTwoProxy;
      } else if (m == "single-proxy") {
        plan.mode = ProxyMode::kSingleProxy;
      } else {
        error("params.mode", "mode must be 'two-proxy' or 'single-proxy'");
      }
    }
    if (shrinking) {
      if (p->contains("schedule")) {
        plan.schedule = schedule((*p)["schedule"], "params.schedule");
      } else if (eps) {
        plan.schedule = guard("params.epsilon", [&] { return ErrorSchedule::constant(*eps); });
      }
    } else if (p->contains("schedule")) {
      error("params.schedule", "schedule is only used by supersim-shrinking");
    }
  }

  std::optional<ErrorSchedule> schedule(const Json& s, const std::string& path) {
    if (!s.is_object()) {
      error(path, "must be an object");
      return std::nullopt;
    }
    check_keys(s, path, {"kind", "value", "ratio", "levels", "values"});
    const std::string kind = s.value("kind", "");
    if (kind == "constant") {
      auto v = number(s, "value", path, true);
      if (!v) return std::nullopt;
      return guard(path, [&] { return ErrorSchedule::constant(*v); });
    }
    if (kind == "geometric") {
      auto v = number(s, "value", path, true);
      auto r = number(s, "ratio", path, true);
      auto l = number(s, "levels", path, true);
      if (!v || !r || !l) return std::nullopt;
      return guard(path, [&] {
        return ErrorSchedule::geometric(*v, *r, static_cast<std::size_t>(*l));
      });
    }
    if (kind == "explicit") {
      if (!s.contains("values")) {
        error(sub(path, "values"), "values is required");
        return std::nullopt;
      }
      auto v = numbers(s["values"], sub(path, "values"));
      if (!v) return std::nullopt;
      return guard(path, [&] { return ErrorSchedule::explicit_values(*v); });
    }
    error(sub(path, "kind"), "kind must be 'constant', 'geometric' or 'explicit'");
    return std::nullopt;
  }

  std::optional<Distribution> distribution(const Json* dists, const char* key, std::size_t n) {
    const std::string path = std::string("distributions.") + key;
    if (!dists || !dists->contains(key)) {
      error(path, std::string(key) + " is required");
      return std::nullopt;
    }
    const Json& s = (*dists)[key];
    if (s.is_array()) {
      auto w = numbers(s, path);
      if (!w) return std::nullopt;
      if (w->size() != n) {
        error(path, "has " + std::to_string(w->size()) + " weights but the domain has " +
                        std::to_string(n) + " elements");
        return std::nullopt;
      }
      return guard(path, [&] { return Distribution(*w); });
    }
    if (!s.is_object()) {
      error(path, "must be an array or an object");
      return std::nullopt;
    }
    check_keys(s, path, {"kind", "weights", "concentration", "points", "weight"});
    const std::string kind = s.value("kind", "");
    if (kind == "explicit") {
      if (!s.contains("weights")) {
        error(sub(path, "weights"), "weights is required");
        return std::nullopt;
      }
      auto w = numbers(s["weights"], sub(path, "weights"));
      if (!w) return std::nullopt;
      if (w->size() != n) {
        error(sub(path, "weights"), "length differs from the domain size");
        return std::nullopt;
      }
      return guard(path, [&] { return Distribution(*w); });
    }
    if (kind == "uniform") return Distribution::uniform(n);
    if (kind == "random") {
      const double c = s.value("concentration", 1.0);
      if (!(c > 0.0)) {
        error(sub(path, "concentration"), "concentration must be positive");
        return std::nullopt;
      }
      rng_used_ = true;
      std::gamma_distribution<double> gam(c, 1.0);
      std::vector<double> w(n);
      for (double& v : w) v = gam(rng_);
      return guard(path, [&] { return Distribution::normalize(w); });
    }
    if (kind == "two_point") {
      if (!s.contains("points") || !s["points"].is_array() || s["points"].size() != 2 ||
          !is_count(s["points"][0]) || !is_count(s["points"][1])) {
        error(sub(path, "points"), "points must be two element indices");
        return std::nullopt;
      }
      const auto a = s["points"][0].get<std::size_t>();
      const auto b = s["points"][1].get<std::size_t>();
      auto w = number(s, "weight", path, true);
      if (!w) return std::nullopt;
      if (a >= n || b >= n) {
        error(sub(path, "points"), "points must lie in the domain");
        return std::nullopt;
      }
      if (!(*w >= 0.0 && *w <= 1.0)) {
        error(sub(path, "weight"), "weight must lie in [0, 1]");
        return std::nullopt;
      }
      std::vector<double> v(n, 0.0);
      v[a] += *w;
      v[b] += 1.0 - *w;
      return guard(path, [&] { return Distribution(v); });
    }
    error(sub(path, "kind"), "kind must be 'explicit', 'uniform', 'random' or 'two_point'");
    return std::nullopt;
  }

  std::optional<BoundedFn> target(std::size_t n) {
    if (!cfg_.contains("target")) {
      error("target", "target is required");
      return std::nullopt;
    }
    const Json& t = cfg_["target"];
    if (t.is_array()) return bounded(t, "target", n);
    if (!t.is_object()) {
      error("target", "must be an array or an object");
      return std::nullopt;
    }
    check_keys(t, "target", {"kind", "values", "value", "grid"});
    const std::string kind = t.value("kind", "");
    if (kind == "explicit") {
      if (!t.contains("values")) {
        error("target.values", "values is required");
        return std::nullopt;
      }
      return bounded(t["values"], "target.values", n);
    }
    if (kind == "constant") {
      auto v = number(t, "value", "target", true);
      if (!v) return std::nullopt;
      return guard("target", [&] { return BoundedFn::constant(n, *v); });
    }
    if (kind == "random") {
      rng_used_ = true;
      const double grid = t.value("grid", 0.0);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<double> v(n);
      for (double& x : v) {
        x = u(rng_);
        if (grid > 0.0) x = std::clamp(round_to_grid(x, grid), 0.0, 1.0);
      }
      return BoundedFn(v);
    }
    error("target.kind", "kind must be 'explicit', 'constant' or 'random'");
    return std::nullopt;
  }

  std::optional<BoundedFn> bounded(const Json& node, const std::string& path, std::size_t n) {
    auto v = numbers(node, path);
    if (!v) return std::nullopt;
    if (v->size() != n) {
      error(path, "has " + std::to_string(v->size()) + " values but the domain has " +
                      std::to_string(n) + " elements");
      return std::nullopt;
    }
    return guard(path, [&] { return BoundedFn(*v); });
  }

  std::optional<Family> family(const Json& s, const std::string& path, const Plan& plan) {
    if (!s.is_object()) {
      error(path, "must be an object");
      return std::nullopt;
    }
    const std::string b = s.value("builder", "");
    const std::size_t n = plan.n;
    if (b == "coordinate") {
      check_keys(s, path, {"builder"});
      return guard(path, [&] {
        return build_coordinate_family(FiniteDomain::make(n, plan.bit_width));
      });
    }
    if (b == "threshold") {
      check_keys(s, path, {"builder", "h", "grid"});
      if (!s.contains("grid")) {
        error(sub(path, "grid"), "grid is required");
        return std::nullopt;
      }
      auto grid = numbers(s["grid"], sub(path, "grid"));
      std::optional<BoundedFn> h;
      if (!s.contains("h") || s["h"] == "target") {
        if (!plan.target) {
          error(sub(path, "h"), "h is required when no target is configured");
          return std::nullopt;
        }
        h = plan.target;
      } else {
        h = bounded(s["h"], sub(path, "h"), n);
      }
      if (!grid || !h) return std::nullopt;
      return guard(path, [&] { return build_threshold_family(*h, *grid); });
    }
    if (b == "rectangle") {
      check_keys(s, path, {"builder", "rows", "cols"});
      auto r = number(s, "rows", path, true);
      auto c = number(s, "cols", path, true);
      if (!r || !c) return std::nullopt;
      const auto rows = static_cast<std::size_t>(*r);
      const auto cols = static_cast<std::size_t>(*c);
      if (rows * cols != n) {
        error(path, "rows * cols must equal the domain size");
        return std::nullopt;
      }
      return guard(path, [&] { return build_rectangle_family(rows, cols); });
    }
    if (b == "explicit") {
      check_keys(s, path, {"builder", "members", "labels"});
      if (!s.contains("members") || !s["members"].is_array() || s["members"].empty()) {
        error(sub(path, "members"), "members must be a nonempty array of arrays");
        return std::nullopt;
      }
      std::vector<Distinguisher> members;
      for (std::size_t i = 0; i < s["members"].size(); ++i) {
        auto f = bounded(s["members"][i], idx(sub(path, "members"), i), n);
        if (!f) return std::nullopt;
        ComplexityLabel label{1, 0};
        if (s.contains("labels")) {
          const Json& ls = s["labels"];
          if (!ls.is_array() || ls.size() != s["members"].size() || !ls[i].is_array() ||
              ls[i].size() != 2 || !is_count(ls[i][0]) ||
              !is_count(ls[i][1])) {
            error(sub(path, "labels"), "labels must be one [s1, s2] pair per member");
            return std::nullopt;
          }
          label = {ls[i][0].get<std::uint64_t>(), ls[i][1].get<std::uint64_t>()};
        }
        members.push_back({*f, label, "member[" + std::to_string(i) + "]"});
      }
      return guard(path, [&] { return Family(members); });
    }
    if (b == "indicators") {
      check_keys(s, path, {"builder", "points"});
      std::vector<std::size_t> pts;
      if (s.contains("points")) {
        if (!s["points"].is_array()) {
          error(sub(path, "points"), "points must be an array of indices");
          return std::nullopt;
        }
        for (std::size_t i = 0; i < s["points"].size(); ++i) {
          const Json& p = s["points"][i];
          if (!is_count(p) || p.get<std::size_t>() >= n) {
            error(idx(sub(path, "points"), i), "must be an element index");
            return std::nullopt;
          }
          pts.push_back(p.get<std::size_t>());
        }
      } else {
        for (std::size_t x = 0; x < n; ++x) pts.push_back(x);
      }
      return guard(path, [&] { return build_indicator_family(n, pts); });
    }
    if (b == "constant") {
      check_keys(s, path, {"builder", "value"});
      auto v = number(s, "value", path, true);
      if (!v) return std::nullopt;
      return guard(path, [&] {
        return Family({{BoundedFn::constant(n, *v), {1, 0}, "const"}});
      });
    }
    if (b == "random") {
      check_keys(s, path, {"builder", "size", "boolean"});
      auto m = number(s, "size", path, true);
      if (!m) return std::nullopt;
      if (!(*m >= 1.0)) {
        error(sub(path, "size"), "size must be >= 1");
        return std::nullopt;
      }
      rng_used_ = true;
      const bool boolean = s.value("boolean", true);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::vector<Distinguisher> members;
      for (std::size_t i = 0; i < static_cast<std::size_t>(*m); ++i) {
        std::vector<double> v(n);
        for (double& x : v) x = boolean ? (u(rng_) < 0.5 ? 0.0 : 1.0) : u(rng_);
        members.push_back({BoundedFn(v), {1, 0}, "random[" + std::to_string(i) + "]"});
      }
      return Family(members);
    }
    if (b == "compose") {
      check_keys(s, path, {"builder", "base", "s1", "s2", "catalog"});
      if (!s.contains("base")) {
        error(sub(path, "base"), "base is required");
        return std::nullopt;
      }
      auto base = family(s["base"], sub(path, "base"), plan);
      auto s1 = number(s, "s1", path, true);
      auto s2 = number(s, "s2", path, true);
      std::vector<Combinator> catalog;
      if (!s.contains("catalog") || !s["catalog"].is_array()) {
        error(sub(path, "catalog"), "catalog must be an array of combinator names");
        return std::nullopt;
      }
      for (std::size_t i = 0; i < s["catalog"].size(); ++i) {
        const Json& c = s["catalog"][i];
        auto parsed = guard(idx(sub(path, "catalog"), i), [&] {
          if (!c.is_string()) throw InvalidArgument("must be a combinator name");
          return Combinator::parse(c.get<std::string>());
        });
        if (!parsed) return std::nullopt;
        catalog.push_back(*parsed);
      }
      if (!base || !s1 || !s2) return std::nullopt;
      return guard(path, [&] {
        return compose_level(*base, static_cast<std::uint64_t>(*s1),
                             static_cast<std::uint64_t>(*s2), catalog);
      });
    }
    if (b == "union") {
      check_keys(s, path, {"builder", "parts"});
      if (!s.contains("parts") || !s["parts"].is_array() || s["parts"].empty()) {
        error(sub(path, "parts"), "parts must be a nonempty array of families");
        return std::nullopt;
      }
      std::optional<Family> acc;
      for (std::size_t i = 0; i < s["parts"].size(); ++i) {
        auto f = family(s["parts"][i], idx(sub(path, "parts"), i), plan);
        if (!f) return std::nullopt;
        acc = acc ? acc->with(f->members()) : *f;
      }
      return acc;
    }
    error(sub(path, "builder"),
          "builder must be one of coordinate, threshold, rectangle, explicit, indicators, "
          "constant, random, compose, union");
    return std::nullopt;
  }

  void build_ladder(Plan& plan) {
    const Json* l = child(cfg_, "ladder", "");
    if (!l) {
      error("ladder", "ladder is required for " + plan.algorithm);
      return;
    }
    check_keys(*l, "ladder", {"levels", "labels", "cumulative", "name"});
    if (!l->contains("levels") || !(*l)["levels"].is_array() || (*l)["levels"].empty()) {
      error("ladder.levels", "levels must be a nonempty array of families");
      return;
    }
    const bool cumulative = l->value("cumulative", true);
    std::vector<Family> levels;
    for (std::size_t i = 0; i < (*l)["levels"].size(); ++i) {
      auto f = family((*l)["levels"][i], idx("ladder.levels", i), plan);
      if (!f) return;
      if (cumulative && !levels.empty()) {
        levels.push_back(levels.back().with(f->members()));
      } else {
        levels.push_back(*f);
      }
    }
    std::vector<ComplexityLabel> labels;
    if (l->contains("labels")) {
      const Json& ls = (*l)["labels"];
      if (!ls.is_array() || ls.size() != levels.size()) {
        error("ladder.labels", "labels must give one [s1, s2] pair per level");
        return;
      }
      for (std::size_t i = 0; i < ls.size(); ++i) {
        if (!ls[i].is_array() || ls[i].size() != 2 || !is_count(ls[i][0]) ||
            !is_count(ls[i][1])) {
          error(idx("ladder.labels", i), "must be a pair [s1, s2] of nonnegative integers");
          return;
        }
        labels.push_back({ls[i][0].get<std::uint64_t>(), ls[i][1].get<std::uint64_t>()});
      }
    } else {
      for (const auto& f : levels) labels.push_back(f.label());
    }
    if (auto why = GradedLadder::nesting_violation(levels, labels)) {
      error("ladder.levels", *why);
      return;
    }
    const std::string name = l->value("name", "ladder");
    plan.ladder = guard("ladder", [&] { return GradedLadder(levels, labels, name); });
  }

  void build_growth(Plan& plan) {
    const Json* g = child(cfg_, "growth", "");
    if (!g) {
      error("growth", "growth is required for " + plan.algorithm);
      return;
    }
    check_keys(*g, "growth", {"kind", "by", "map"});
    const std::string kind = g->value("kind", "");
    if (kind == "identity") {
      plan.growth = GrowthMap::identity();
    } else if (kind == "shift") {
      if (!g->contains("by") || !is_count((*g)["by"])) {
        error("growth.by", "by must be a nonnegative integer");
        return;
      }
      plan.growth = GrowthMap::shift((*g)["by"].get<std::size_t>());
    } else if (kind == "table") {
      if (!g->contains("map") || !(*g)["map"].is_array()) {
        error("growth.map", "map must be an array of level indices");
        return;
      }
      std::vector<std::size_t> t;
      for (std::size_t i = 0; i < (*g)["map"].size(); ++i) {
        const Json& v = (*g)["map"][i];
        if (!is_count(v)) {
          error(idx("growth.map", i), "must be a level index");
          return;
        }
        t.push_back(v.get<std::size_t>());
      }
      plan.growth = guard("growth.map", [&] { return GrowthMap::table(t); });
    } else {
      error("growth.kind", "kind must be 'identity', 'shift' or 'table'");
    }
  }

  void check_predictor(Plan& plan) {
    const Json& p = plan.predictor;
    if (p.is_array()) {
      bounded(p, "predictor", plan.n);
      return;
    }
    if (!p.is_object()) {
      error("predictor", "must be an array or an object");
      return;
    }
    check_keys(p, "predictor", {"kind", "values"});
    const std::string kind = p.value("kind", "");
    if (kind == "explicit") {
      if (!p.contains("values")) {
        error("predictor.values", "values is required");
        return;
      }
      bounded(p["values"], "predictor.values", plan.n);
    } else if (kind != "calibrated" && kind != "target") {
      error("predictor.kind", "kind must be 'calibrated', 'target' or 'explicit'");
    }
  }

  const Json& cfg_;
  std::optional<std::uint64_t> seed_;
  std::mt19937_64 rng_;
  bool rng_used_ = false;
  std::vector<Diagnostic> diags_;
};

inline std::vector<Diagnostic> validate(const Json& cfg) {
  Builder b(cfg);
  b.build();
  return b.diagnostics();
}

struct RunOptions {
  std::optional<std::uint64_t> seed;
};

struct RunOutcome {
  Json report;
  int exit_code = kOk;
  std::string trace_jsonl;
};

namespace detail {

inline Json audit_inequalities(std::vector<Inequality>& ineqs, const BoundedFn& g,
                               const BoundedFn& h, const Distribution& d, const Family& fam,
                               double eps) {
  const AuditReport a = audit(g, h, d, fam, eps);
  ineqs.push_back(Inequality::le("multiaccuracy", a.multiaccuracy_error, eps, eps));
  return to_json(a);
}

inline void trace_bounds(std::vector<Inequality>& ineqs, const BoostTrace& t, double eps) {
  BoostParams p;
  p.epsilon = eps;
  ineqs.push_back(Inequality::le("update_bound", static_cast<double>(t.updates),
                                 static_cast<double>(p.update_bound()), 0.0));
  double min_drop = 1.0;
  bool any = false;
  for (const auto& r : t.iterations) {
    if (r.kind != IterationRecord::Kind::kUpdate) continue;
    min_drop = std::min(min_drop, r.phi_before - r.phi_after);
    any = true;
  }
  if (any) {
    ineqs.push_back(
        Inequality::ge("potential_drop", min_drop, 0.75 * eps * eps, 0.75 * eps * eps));
  }
}

inline BoundedFn verify_predictor(const Plan& plan, const MixtureInstance& inst,
                                  double reg_eps, Json& results) {
  const Json& p = plan.predictor;
  if (p.is_array()) return BoundedFn(p.get<std::vector<double>>());
  const std::string kind = p.value("kind", "calibrated");
  if (kind == "explicit") return BoundedFn(p["values"].get<std::vector<double>>());
  if (kind == "target") return inst.g;
  BoostParams params;
  params.epsilon = reg_eps;
  params.gamma = std::min(*plan.gamma, reg_eps);
  params.round_grid = plan.round_grid;
  params.max_iters = plan.max_iters;
  Simulation sim = calibrated_multiaccuracy(inst.g, inst.dx, *plan.family, params);
  results["predictor_trace"] = to_json(sim.trace);
  return sim.predictor;
}

inline Json execute(const Plan& plan, std::vector<Inequality>& ineqs, std::ostringstream& trace) {
  Json results;
  const std::string& a = plan.algorithm;
  if (a == "boost" || a == "calibrated") {
    BoostParams params{plan.epsilon, plan.round_grid, plan.max_iters, plan.gamma};
    const Simulation sim = a == "boost"
                               ? multiaccuracy_boost(*plan.target, *plan.d, *plan.family, params)
                               : calibrated_multiaccuracy(*plan.target, *plan.d, *plan.family, params);
    results["predictor"] = to_json(sim.predictor.values());
    results["trace"] = to_json(sim.trace);
    results["phi_initial"] = potential(*plan.target, BoundedFn::constant(plan.n, 0.5), *plan.d);
    results["phi_final"] = potential(*plan.target, sim.predictor, *plan.d);
    results["audit"] = audit_inequalities(ineqs, *plan.target, sim.predictor, *plan.d,
                                          *plan.family, plan.epsilon);
    if (a == "calibrated") {
      ineqs.push_back(Inequality::le("calibration",
                                     calibration_error(*plan.target, sim.predictor, *plan.d),
                                     *plan.gamma, *plan.gamma));
    }
    trace_bounds(ineqs, sim.trace, plan.epsilon);
    write_trace_jsonl(trace, sim.trace, a);
  } else if (a == "multicalibrate") {
    const Simulation sim =
        multicalibrate(*plan.target, *plan.d, *plan.family, plan.epsilon, plan.max_iters);
    const AuditReport r = audit(*plan.target, sim.predictor, *plan.d, *plan.family, plan.epsilon);
    results["predictor"] = to_json(sim.predictor.values());
    results["trace"] = to_json(sim.trace);
    results["audit"] = to_json(r);
    ineqs.push_back(Inequality::le("bad_mass", r.bad_mass, plan.epsilon, plan.epsilon));
    ineqs.push_back(Inequality::le("implied_multiaccuracy", r.multiaccuracy_error,
                                   3.0 * plan.epsilon, 3.0 * plan.epsilon));
    write_trace_jsonl(trace, sim.trace, a);
  } else if (a == "supersim-expanding") {
    SupersimOptions opt{plan.gamma, plan.round_grid, plan.max_iters};
    const SupersimResult r = supersimulator_expanding(*plan.target, *plan.d, *plan.ladder,
                                                      *plan.growth, plan.epsilon, opt);
    results["supersimulator"] = to_json(r);
    results["audit"] = audit_inequalities(ineqs, *plan.target, r.predictor, *plan.d,
                                          (*plan.ladder)[r.fooled_level], plan.epsilon);
    ineqs.push_back(Inequality::le("level_bound", static_cast<double>(r.level),
                                   static_cast<double>(r.bound_level), 0.0));
    trace_bounds(ineqs, r.trace, plan.epsilon);
    write_trace_jsonl(trace, r.trace, a);
  } else if (a == "supersim-shrinking") {
    const PairResult r = supersimulator_shrinking(*plan.target, *plan.d, *plan.ladder,
                                                  *plan.growth, *plan.schedule, *plan.alpha);
    results["pair"] = to_json(r);
    const Family& fooled = (*plan.ladder)[r.fooled_level];
    ineqs.push_back(Inequality::le(
        "regular_h_prime", best_response(fooled, *plan.target, r.h_prime, *plan.d).correlation,
        r.eps_s, r.eps_s));
    ineqs.push_back(Inequality::le("similarity", r.similarity, r.similarity_bound, 4.0 * r.eps_s));
    ineqs.push_back(Inequality::le("identity_residual", r.identity_residual, kDerivedTol, 0.0));
    const CorollaryCheck c = corollary_check(*plan.target, *plan.d, r, *plan.ladder, *plan.growth);
    results["corollary"] = {{"measured", c.measured}, {"bound", c.bound}, {"beta", c.beta},
                            {"passed", c.passed}};
    ineqs.push_back(Inequality::le("near_regular_h", c.measured, c.bound, c.bound - r.eps_s));
    ineqs.push_back(Inequality::le("level_bound", static_cast<double>(r.level_prime),
                                   static_cast<double>(r.bound_level_loose), 0.0));
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
      write_trace_jsonl(trace, r.rounds[i].trace, "round" + std::to_string(i));
    }
  } else if (a == "verify-balanced" || a == "verify-tilted") {
    const bool tilted = a == "verify-tilted";
    const MixtureInstance inst = build_mixture(*plan.d0, *plan.d1, tilted ? plan.epsilon : 0.5);
    const double reg_eps = tilted ? plan.epsilon * plan.epsilon : plan.epsilon;
    const BoundedFn h = verify_predictor(plan, inst, reg_eps, results);
    const CharacterizationReport rep =
        tilted ? verify_tilted(inst, h, *plan.family, plan.epsilon, *plan.gamma, plan.k)
               : verify_balanced(inst, h, *plan.family, plan.epsilon, *plan.gamma, plan.k);
    results["report"] = to_json(rep);
    ineqs.insert(ineqs.end(), rep.inequalities.begin(), rep.inequalities.end());
  } else if (a == "characterize") {
    const CharacterizationReport rep =
        characterize(*plan.d0, *plan.d1, *plan.family, plan.epsilon, plan.k, plan.mode);
    results["report"] = to_json(rep);
    ineqs.insert(ineqs.end(), rep.inequalities.begin(), rep.inequalities.end());
    if (rep.trace) write_trace_jsonl(trace, *rep.trace, a);
  } else if (a == "characterize-super") {
    const CharacterizationReport rep = characterize_super(
        *plan.d0, *plan.d1, *plan.ladder, *plan.growth, plan.epsilon, plan.k, plan.mode,
        plan.round_grid);
    results["report"] = to_json(rep);
    ineqs.insert(ineqs.end(), rep.inequalities.begin(), rep.inequalities.end());
    if (rep.trace) write_trace_jsonl(trace, *rep.trace, a);
  } else if (a == "gap-closure") {
    const CharacterizationReport sup = characterize_super(
        *plan.d0, *plan.d1, *plan.ladder, *plan.growth, plan.epsilon, plan.k, plan.mode,
        plan.round_grid);
    // The explicit-family route on the same instance, with F the class the
    // supersimulator was made to fool.
    const CharacterizationReport plain = characterize(
        *plan.d0, *plan.d1, (*plan.ladder)[*sup.chain->fooled_level], plan.epsilon, plan.k,
        plan.mode);
    const Json a_chain = to_json(*plain.chain);
    const Json b_chain = to_json(*sup.chain);
    results["characterize"] = to_json(plain);
    results["characterize_super"] = to_json(sup);
    results["chain_diff"] = Json::diff(a_chain, b_chain);
    for (const auto& i : sup.inequalities) {
      ineqs.push_back(i);
      ineqs.back().name = "super." + i.name;
    }
    for (const auto& i : plain.inequalities) {
      ineqs.push_back(i);
      ineqs.back().name = "plain." + i.name;
    }
    ineqs.push_back(Inequality::ge("super.same_family", sup.chain->same_family ? 1.0 : 0.0, 1.0, 0.0));
    ineqs.push_back(Inequality::le("plain.same_family", plain.chain->same_family ? 1.0 : 0.0, 0.0, 0.0));
  }
  return results;
}

}  // namespace detail

// Validates, executes and reports. Never throws for library errors: they
// become exit codes with the message in the report.
inline RunOutcome run(const Json& cfg, const RunOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  RunOutcome out;
  Json echo = cfg;
  if (opt.seed && echo.is_object()) echo["seed"] = *opt.seed;
  out.report["config"] = echo;
  out.report["version"] = kVersion;

  Builder builder(cfg, opt.seed);
  const Plan plan = builder.build();
  auto finish = [&](int code) {
    out.exit_code = code;
    out.report["summary"]["exit_code"] = code;
    out.report["wall_time_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return out;
  };
  if (!builder.diagnostics().empty()) {
    Json diags = Json::array();
    for (const auto& d : builder.diagnostics()) diags.push_back({{"path", d.path}, {"message", d.message}});
    out.report["summary"] = {{"passed", false}, {"error", {{"type", "config"}, {"diagnostics", diags}}}};
    return finish(kConfigError);
  }
  out.report["algorithm"] = plan.algorithm;

  std::vector<Inequality> ineqs;
  std::ostringstream trace;
  try {
    out.report["results"] = detail::execute(plan, ineqs, trace);
  } catch (const ContractViolation& e) {
    out.report["summary"] = {{"passed", false},
                             {"error", {{"type", "contract_violation"}, {"message", e.what()}}}};
    return finish(kContract);
  } catch (const HypothesisFailed& e) {
    out.report["summary"] = {{"passed", false},
                             {"error", {{"type", "hypothesis"}, {"message", e.what()}}}};
    return finish(kConfigError);
  } catch (const Error& e) {
    out.report["summary"] = {{"passed", false},
                             {"error", {{"type", "precondition"}, {"message", e.what()}}}};
    return finish(kConfigError);
  }
  out.trace_jsonl = trace.str();
  out.report["inequalities"] = to_json(ineqs);
  Json failed = Json::array();
  for (const auto& i : ineqs) {
    if (!i.pass) failed.push_back(i.name);
  }
  out.report["summary"] = {{"passed", failed.empty()},
                           {"checked", ineqs.size()},
                           {"failed", failed}};
  return finish(failed.empty() ? kOk : kInequalityFailed);
}

// Worked examples as ready-to-run configs.
inline const std::map<std::string, std::string>& demo_configs() {
  static const std::map<std::string, std::string> demos = {
      {"boost", R"({
  "algorithm": "boost",
  "domain": {"size": 2},
  "distributions": {"D": {"kind": "uniform"}},
  "target": [1, 0],
  "family": {"builder": "indicators", "points": [1]},
  "params": {"epsilon": 0.1}
})"},
      {"calibrated", R"({
  "algorithm": "calibrated",
  "domain": {"size": 2},
  "distributions": {"D": {"kind": "uniform"}},
  "target": [1, 0],
  "family": {"builder": "indicators", "points": [1]},
  "params": {"epsilon": 0.1, "gamma": 0.01}
})"},
      {"multicalibrate", R"({
  "algorithm": "multicalibrate",
  "domain": {"size": 2},
  "distributions": {"D": {"kind": "uniform"}},
  "target": [1, 0],
  "family": {"builder": "indicators", "points": [1]},
  "params": {"epsilon": 0.2}
})"},
      {"supersim-expanding", R"({
  "algorithm": "supersim-expanding",
  "domain": {"size": 2},
  "distributions": {"D": {"kind": "uniform"}},
  "target": [1, 0],
  "ladder": {"levels": [
    {"builder": "constant", "value": 1},
    {"builder": "indicators", "points": [1]},
    {"builder": "indicators", "points": [0]},
    {"builder": "indicators", "points": [0]}]},
  "growth": {"kind": "shift", "by": 1},
  "params": {"epsilon": 0.1}
})"},
      {"supersim-shrinking", R"({
  "algorithm": "supersim-shrinking",
  "domain": {"size": 2},
  "distributions": {"D": {"kind": "uniform"}},
  "target": [1, 0],
  "ladder": {"levels": [
    {"builder": "constant", "value": 1},
    {"builder": "indicators", "points": [1]},
    {"builder": "indicators", "points": [0]},
    {"builder": "indicators", "points": [0]}]},
  "growth": {"kind": "shift", "by": 1},
  "params": {"alpha": 0.2, "schedule": {"kind": "constant", "value": 0.1}}
})"},
      {"verify-balanced", R"({
  "algorithm": "verify-balanced",
  "domain": {"size": 2},
  "distributions": {"D0": [1, 0], "D1": [0, 1]},
  "family": {"builder": "union", "parts": [
    {"builder": "constant", "value": 1},
    {"builder": "indicators", "points": [1]}]},
  "params": {"epsilon": 0.05, "gamma": 0.05, "k": 3},
  "predictor": {"kind": "calibrated"}
})"},
      {"verify-tilted", R"({
  "algorithm": "verify-tilted",
  "domain": {"size": 2},
  "distributions": {"D0": [0.5, 0.5], "D1": [0, 1]},
  "family": {"builder": "union", "parts": [
    {"builder": "constant", "value": 1},
    {"builder": "indicators", "points": [1]}]},
  "params": {"epsilon": 0.2, "gamma": 0.01, "k": 2},
  "predictor": {"kind": "calibrated"}
})"},
      {"characterize", R"({
  "algorithm": "characterize",
  "domain": {"size": 2},
  "distributions": {"D0": [1, 0], "D1": [0, 1]},
  "family": {"builder": "union", "parts": [
    {"builder": "constant", "value": 1},
    {"builder": "indicators", "points": [1]}]},
  "params": {"epsilon": 0.2, "k": 3, "mode": "two-proxy"}
})"},
      {"characterize-super", R"({
  "algorithm": "characterize-super",
  "domain": {"size": 2, "bit_width": 1},
  "distributions": {"D0": [1, 0], "D1": [0, 1]},
  "ladder": {"levels": [
    {"builder": "constant", "value": 1},
    {"builder": "coordinate"},
    {"builder": "compose", "base": {"builder": "coordinate"}, "s1": 1, "s2": 1,
     "catalog": ["negation"]}]},
  "growth": {"kind": "shift", "by": 1},
  "params": {"epsilon": 0.2, "k": 3, "mode": "two-proxy"}
})"},
      {"gap-closure", R"({
  "algorithm": "gap-closure",
  "domain": {"size": 2, "bit_width": 1},
  "distributions": {"D0": [1, 0], "D1": [0, 1]},
  "ladder": {"levels": [
    {"builder": "constant", "value": 1},
    {"builder": "coordinate"},
    {"builder": "compose", "base": {"builder": "coordinate"}, "s1": 1, "s2": 1,
     "catalog": ["negation"]}]},
  "growth": {"kind": "shift", "by": 1},
  "params": {"epsilon": 0.2, "k": 3, "mode": "two-proxy"}
})"},
  };
  return demos;
}

inline Json demo_config(const std::string& name) {
  const auto& demos = demo_configs();
  const auto it = demos.find(name);
  if (it == demos.end()) {
    std::string names;
    for (const auto& [n, _] : demos) names += (names.empty() ? "" : ", ") + n;
    throw InvalidArgument("unknown demo '" + name + "' (available: " + names + ")");
  }
  return Json::parse(it->second);
}

// Report text with the timing field removed, for byte comparisons.
inline std::string canonical(Json report) {
  report.erase("wall_time_ms");
  return report.dump(2);
}

}  // namespace regsim::experiment
