// Copyright 2026 The selattack Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// selattack command-line front end. Config file first, then flags win.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "selattack.hpp"

namespace {

using namespace selattack;

struct Overrides {
  std::string config;
  std::string target;
  std::vector<std::string> references;
  std::string recipe;
  std::optional<double> threshold;
  std::optional<std::size_t> budget;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool trace = false;
  std::string out;
};

// NAME or NAME=ENDPOINT. A new name needs an endpoint.
void assign_role(RunConfig& cfg, const std::string& arg, Role role) {
  const auto eq = arg.find('=');
  const std::string name = arg.substr(0, eq);
  if (name.empty()) throw ConfigError("empty model name in '" + arg + "'");
  ModelHandle* m = nullptr;
  for (auto& h : cfg.models) {
    if (h.name == name) m = &h;
  }
  if (!m) {
    if (eq == std::string::npos) throw ConfigError("unknown model '" + name + "'; use NAME=ENDPOINT");
    cfg.models.push_back(ModelHandle{});
    m = &cfg.models.back();
    m->name = name;
  }
  if (eq != std::string::npos) m->endpoint = arg.substr(eq + 1);
  m->role = role;
}

RunConfig build_config(const Overrides& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config);
  if (!o.target.empty()) {
    // The new target displaces the old one into the reference pool.
    for (auto& h : cfg.models) {
      if (h.role == Role::kTarget) h.role = Role::kReference;
    }
    assign_role(cfg, o.target, Role::kTarget);
  }
  if (!o.references.empty()) {
    // Flags replace the configured reference pool.
    std::vector<std::string> named;
    for (const auto& r : o.references) named.push_back(r.substr(0, r.find('=')));
    std::erase_if(cfg.models, [&](const ModelHandle& h) {
      return h.role == Role::kReference && std::find(named.begin(), named.end(), h.name) == named.end();
    });
    for (const auto& r : o.references) assign_role(cfg, r, Role::kReference);
  }
  if (!o.recipe.empty()) cfg.recipe = parse_recipe(o.recipe);
  if (o.threshold) cfg.threshold = *o.threshold;
  if (o.budget) cfg.budget = *o.budget;
  if (o.seed) cfg.seed = *o.seed;
  if (o.workers) cfg.workers = *o.workers;
  if (o.trace) cfg.trace = true;
  if (!o.out.empty()) cfg.out_dir = std::filesystem::absolute(o.out).string();
  return cfg;
}

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "Run configuration (JSON)");
  cmd->add_option("--target", o.target, "Target model NAME or NAME=ENDPOINT");
  cmd->add_option("--reference", o.references, "Reference model NAME or NAME=ENDPOINT")->take_all();
  cmd->add_option("--recipe", o.recipe, "char | embed | maskfill | reduction");
  cmd->add_option("--threshold", o.threshold, "Selectivity gap threshold");
  cmd->add_option("--budget", o.budget, "Oracle queries per item");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--workers", o.workers, "Worker threads (0 = automatic)");
  cmd->add_flag("--trace", o.trace, "Write per-item search traces");
  cmd->add_option("--out", o.out, "Output directory");
}

void print_summary(const EvaluationSummary& s) {
  for (const auto& m : s.models) {
    std::printf("%-24s %-9s base %s  attack %s  delta %s\n", m.name.c_str(), m.role.c_str(),
                format_accuracy(m.s_base()).c_str(), format_accuracy(m.s_attack()).c_str(),
                format_delta(m.delta()).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"selattack: selective adversarial attacks on multiple-choice benchmarks"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Overrides o;
  std::string records;
  std::string export_out;
  std::vector<std::string> report_inputs;
  std::string report_stem = "report";

  auto* evaluate = app.add_subcommand("evaluate", "Baseline accuracy of every configured model");
  auto* attack = app.add_subcommand("attack", "Attack the target and assess selectivity");
  auto* surrogate = app.add_subcommand("surrogate", "Paraphrase sampling and surrogate training cycles");
  auto* assess = app.add_subcommand("assess", "Re-score existing attack records");
  auto* exp = app.add_subcommand("export", "Write the perturbed benchmark from attack records");
  auto* report = app.add_subcommand("report", "Combine run summaries into one table");
  for (auto* c : {evaluate, attack, surrogate, assess, exp}) add_common(c, o);
  assess->add_option("--records", records, "records.jsonl from an attack run")->required();
  exp->add_option("--records", records, "records.jsonl from an attack run")->required();
  exp->add_option("--output", export_out, "Perturbed dataset path (default <out>/perturbed.jsonl)");
  report->add_option("inputs", report_inputs, "report.json, summary json or csv files")->required();
  report->add_option("--stem", report_stem, "Output path without extension");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report->parsed()) {
      std::vector<std::filesystem::path> paths(report_inputs.begin(), report_inputs.end());
      for (const auto& s : cmd_report(paths, report_stem)) print_summary(s);
      return kExitOk;
    }
    const RunConfig cfg = build_config(o);
    if (evaluate->parsed()) {
      const auto out = cmd_evaluate(cfg);
      print_summary(out.summary);
      return out.exit_code;
    }
    if (attack->parsed()) {
      const auto out = cmd_attack(cfg);
      print_summary(out.result.summary);
      std::printf("category: %s\n", std::string(to_string(out.assessment.category)).c_str());
      return out.exit_code;
    }
    if (assess->parsed()) {
      const auto out = cmd_assess(cfg, records);
      print_summary(out.summary);
      std::printf("category: %s\n", std::string(to_string(out.assessment.category)).c_str());
      return out.exit_code;
    }
    if (exp->parsed()) {
      const auto path = export_out.empty() ? cfg.resolve(cfg.out_dir) / "perturbed.jsonl"
                                           : std::filesystem::path(export_out);
      cmd_export(cfg, records, path);
      std::printf("wrote %s\n", path.string().c_str());
      return kExitOk;
    }
    if (surrogate->parsed()) {
      const auto out = cmd_surrogate(cfg);
      for (const auto& it : out.cycle.iterations) {
        std::printf("[%s]\n", it.summary.label.c_str());
        print_summary(it.summary);
      }
      if (out.cycle.partial_failure) std::fprintf(stderr, "partial failure: %s\n", out.cycle.failure.c_str());
      return out.exit_code;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
