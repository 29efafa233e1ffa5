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

// regsim: run, validate and demo JSON-configured experiments.
//
//   regsim run config.json [--seed N] [--out report.json] [--trace trace.jsonl]
//   regsim validate config.json
//   regsim demo boost
//
// REGSIM_THREADS sets the worker count for best-response scans.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "regsim/experiment.hpp"

namespace {

namespace ex = regsim::experiment;

std::optional<regsim::Json> load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << "\n";
    return std::nullopt;
  }
  try {
    return regsim::Json::parse(in);
  } catch (const regsim::Json::parse_error& e) {
    std::cerr << "error: " << path << " is not valid JSON: " << e.what() << "\n";
    return std::nullopt;
  }
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    return false;
  }
  out << text;
  return static_cast<bool>(out);
}

struct Outputs {
  std::string report;
  std::string trace;
};

int emit(const regsim::Json& cfg, const ex::RunOutcome& outcome, Outputs out) {
  if (cfg.is_object() && cfg.contains("output") && cfg["output"].is_object()) {
    const auto& o = cfg["output"];
    if (out.report.empty() && o.contains("report") && o["report"].is_string()) {
      out.report = o["report"].get<std::string>();
    }
    if (out.trace.empty() && o.contains("trace") && o["trace"].is_string()) {
      out.trace = o["trace"].get<std::string>();
    }
  }
  const std::string text = outcome.report.dump(2) + "\n";
  if (out.report.empty()) {
    std::cout << text;
  } else if (!write_file(out.report, text)) {
    return ex::kConfigError;
  }
  if (!out.trace.empty() && !write_file(out.trace, outcome.trace_jsonl)) {
    return ex::kConfigError;
  }
  const auto& summary = outcome.report["summary"];
  if (summary.contains("error")) {
    const auto& err = summary["error"];
    if (err.contains("diagnostics")) {
      for (const auto& d : err["diagnostics"]) {
        std::cerr << d["path"].get<std::string>() << ": " << d["message"].get<std::string>()
                  << "\n";
      }
    } else {
      std::cerr << err["type"].get<std::string>() << ": " << err["message"].get<std::string>()
                << "\n";
    }
  } else if (!summary["failed"].empty()) {
    std::cerr << "failed inequalities: " << summary["failed"].dump() << "\n";
  }
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"regsim: regularity, supersimulator and product-indistinguishability experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string demo_name;
  std::optional<std::uint64_t> seed;
  Outputs out;
  bool list = false;

  auto* run = app.add_subcommand("run", "Run an experiment config and print its report");
  run->add_option("config", config_path, "Path to the JSON config")->required();

  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", config_path, "Path to the JSON config")->required();

  auto* demo = app.add_subcommand("demo", "Run a bundled worked example");
  demo->add_option("name", demo_name, "Demo name");
  demo->add_flag("--list", list, "List the bundled demos");

  for (auto* sc : {run, demo}) {
    sc->add_option("--seed", seed, "Override the config seed");
    sc->add_option("--out", out.report, "Write the report here instead of stdout");
    sc->add_option("--trace", out.trace, "Write per-iteration trace records (JSON lines)");
  }

  CLI11_PARSE(app, argc, argv);

  if (*validate) {
    const auto cfg = load(config_path);
    if (!cfg) return ex::kConfigError;
    const auto diags = ex::validate(*cfg);
    for (const auto& d : diags) std::cout << d.str() << "\n";
    if (diags.empty()) std::cout << "ok\n";
    return diags.empty() ? ex::kOk : ex::kConfigError;
  }

  regsim::Json cfg;
  if (*demo) {
    if (list || demo_name.empty()) {
      for (const auto& [name, _] : ex::demo_configs()) std::cout << name << "\n";
      return list ? ex::kOk : ex::kConfigError;
    }
    try {
      cfg = ex::demo_config(demo_name);
    } catch (const regsim::Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return ex::kConfigError;
    }
  } else {
    const auto loaded = load(config_path);
    if (!loaded) return ex::kConfigError;
    cfg = *loaded;
  }
  return emit(cfg, ex::run(cfg, {seed}), out);
}
