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

// JSON views of library results. Objects keep their keys sorted, so equal
// results always serialise to equal bytes.

#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "regsim/products.hpp"
#include "regsim/regularity.hpp"
#include "regsim/supersim.hpp"

namespace regsim {

using Json = nlohmann::json;

inline Json to_json(std::span<const double> v) { return Json(std::vector<double>(v.begin(), v.end())); }

inline Json to_json(const ComplexityLabel& l) {
  Json j = Json::array({l.s1, l.s2});
  if (l.saturated) return Json{{"label", j}, {"saturated", true}};
  return j;
}

inline Json to_json(const IterationRecord& r) {
  Json j{{"index", r.index},
         {"kind", IterationRecord::kind_name(r.kind)},
         {"phi_before", r.phi_before},
         {"phi_after", r.phi_after},
         {"phi_bound", r.phi_bound},
         {"digest", r.digest}};
  if (r.kind != IterationRecord::Kind::kRecalibrate) {
    j["member"] = r.member;
    j["descriptor"] = r.descriptor;
    j["sign"] = r.sign;
    j["correlation"] = r.correlation;
  }
  j["step"] = r.step;
  if (r.level_value) {
    j["level_value"] = *r.level_value;
    j["level_mass"] = r.level_mass;
  }
  return j;
}

inline Json to_json(const BoostTrace& t) {
  Json it = Json::array();
  for (const auto& r : t.iterations) it.push_back(to_json(r));
  Json j{{"iterations", it},
         {"updates", t.updates},
         {"recalibrations", t.recalibrations},
         {"termination", t.termination},
         {"label", to_json(t.label)},
         {"epsilon", t.epsilon},
         {"grid", t.grid}};
  if (t.gamma) j["gamma"] = *t.gamma;
  return j;
}

// One JSON object per line, one line per iteration.
inline void write_trace_jsonl(std::ostream& os, const BoostTrace& t,
                              const std::string& stage = {}) {
  for (const auto& r : t.iterations) {
    Json j = to_json(r);
    if (!stage.empty()) j["stage"] = stage;
    os << j.dump() << '\n';
  }
}

inline Json to_json(const AuditReport& a) {
  Json levels = Json::array();
  for (const auto& l : a.levels) {
    levels.push_back({{"value", l.value},
                      {"mass", l.mass},
                      {"max_error", l.max_error},
                      {"witness", l.witness},
                      {"sign", l.sign},
                      {"violating", l.violating}});
  }
  return {{"epsilon", a.epsilon},
          {"multiaccuracy_error", a.multiaccuracy_error},
          {"multiaccuracy_witness", a.multiaccuracy_witness},
          {"multiaccuracy_sign", a.multiaccuracy_sign},
          {"calibration_error", a.calibration_error},
          {"bad_mass", a.bad_mass},
          {"levels", levels},
          {"multicalibrated", a.multicalibrated}};
}

inline Json to_json(const Inequality& i) {
  return {{"name", i.name}, {"relation", i.relation}, {"lhs", i.lhs},
          {"rhs", i.rhs},   {"slack", i.slack},       {"pass", i.pass}};
}

inline Json to_json(const std::vector<Inequality>& v) {
  Json j = Json::array();
  for (const auto& i : v) j.push_back(to_json(i));
  return j;
}

inline Json to_json(const std::vector<RecurrenceStep>& steps) {
  Json j = Json::array();
  for (const auto& s : steps) {
    j.push_back({{"index", s.index}, {"label", to_json(s.label)}, {"exhausted", s.exhausted}});
  }
  return j;
}

inline Json to_json(const SupersimResult& r) {
  return {{"predictor", to_json(r.predictor.values())},
          {"level", r.level},
          {"level_label", to_json(r.level_label)},
          {"fooled_level", r.fooled_level},
          {"level_history", r.level_history},
          {"trace", to_json(r.trace)},
          {"recurrence", to_json(r.recurrence)},
          {"bound_round", r.bound_round},
          {"bound_level", r.bound_level},
          {"epsilon", r.epsilon}};
}

inline Json to_json(const PairResult& r) {
  Json rounds = Json::array();
  for (const auto& rd : r.rounds) {
    rounds.push_back({{"level", rd.level},
                      {"fooled_level", rd.fooled_level},
                      {"eps", rd.eps},
                      {"phi", rd.phi},
                      {"updates", rd.trace.updates},
                      {"recalibrations", rd.trace.recalibrations}});
  }
  return {{"h", to_json(r.h.values())},
          {"h_prime", to_json(r.h_prime.values())},
          {"level", r.level},
          {"level_prime", r.level_prime},
          {"label", to_json(r.label)},
          {"label_prime", to_json(r.label_prime)},
          {"fooled_level", r.fooled_level},
          {"round", r.round},
          {"eps_s", r.eps_s},
          {"phi", r.phi},
          {"phi_next", r.phi_next},
          {"gap", r.gap},
          {"similarity", r.similarity},
          {"cross_term", r.cross_term},
          {"identity_residual", r.identity_residual},
          {"similarity_bound", r.similarity_bound},
          {"alpha", r.alpha},
          {"bound_index", r.bound_index},
          {"bound_index_loose", r.bound_index_loose},
          {"bound_level", r.bound_level},
          {"bound_level_loose", r.bound_level_loose},
          {"rounds", rounds},
          {"recurrence", to_json(r.recurrence)}};
}

inline Json to_json(const ChainReport& c) {
  auto names = [](const TupleFamily& f) {
    Json j = Json::array();
    for (const auto& m : f.members) j.push_back(m.descriptor());
    return j;
  };
  Json j{{"lower_family", {{"name", c.lower.name}, {"members", names(c.lower)}}},
         {"upper_family", {{"name", c.upper.name}, {"members", names(c.upper)}}},
         {"same_family", c.same_family},
         {"lower_distance", c.lower_distance},
         {"lower_witness", c.lower_witness},
         {"upper_distance", c.upper_distance},
         {"upper_witness", c.upper_witness},
         {"proxy_kfold_tv", c.middle}};
  if (c.level) j["level"] = *c.level;
  if (c.fooled_level) j["fooled_level"] = *c.fooled_level;
  if (c.level_label) j["level_label"] = to_json(*c.level_label);
  if (c.fooled_label) j["fooled_label"] = to_json(*c.fooled_label);
  if (c.test_contained) j["test_contained"] = *c.test_contained;
  if (c.bound_level) j["bound_level"] = *c.bound_level;
  return j;
}

inline Json to_json(const HybridReport& h) {
  return {{"gaps", h.gaps}, {"bounds", h.bounds}, {"max_gap", h.max_gap}, {"passed", h.passed}};
}

inline Json to_json(const CharacterizationReport& r) {
  Json hybrids = Json::array();
  for (const auto& h : r.hybrids) hybrids.push_back(to_json(h));
  Json j{{"kind", r.kind},
         {"mode", r.mode == ProxyMode::kTwoProxy ? "two-proxy" : "single-proxy"},
         {"params",
          {{"k", r.k},
           {"epsilon", r.epsilon},
           {"eps_regular", r.eps_regular},
           {"gamma", r.gamma},
           {"prior", r.prior}}},
         {"audits",
          {{"multiaccuracy_error", r.multiaccuracy_error},
           {"calibration_error", r.calibration_error}}},
         {"p", r.p},
         {"h", r.h},
         {"tilde1", r.tilde1},
         {"hat0", r.hat0},
         {"hat1", r.hat1},
         {"proxy_kfold_tv", r.proxy_kfold_tv},
         {"advantage", r.advantage},
         {"true_kfold_tv", r.true_kfold_tv},
         {"tie_mass", {r.tie_mass0, r.tie_mass1}},
         {"hybrids", hybrids},
         {"inequalities", to_json(r.inequalities)},
         {"notes", r.notes}};
  if (r.tilde0) j["tilde0"] = *r.tilde0;
  if (r.chain) j["chain"] = to_json(*r.chain);
  if (r.trace) {
    j["trace_summary"] = {{"updates", r.trace->updates},
                          {"recalibrations", r.trace->recalibrations},
                          {"label", to_json(r.trace->label)}};
  }
  return j;
}

}  // namespace regsim
