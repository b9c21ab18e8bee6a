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

// Run configuration: one JSON document, echoed verbatim into every output.
// Relative paths resolve against the directory of the config file. Secrets
// never appear here; models name the environment variable holding a key.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/constraint.hpp"
#include "selattack/oracle.hpp"
#include "selattack/search.hpp"
#include "selattack/selectivity.hpp"
#include "selattack/surrogate.hpp"

namespace selattack {

struct RecipeOptions {
  // Candidates per token for embed and maskfill.
  std::size_t k = 8;
  // Static "word<TAB>vector" table for embed; when empty the embedder model
  // encodes `vocabulary` instead.
  std::string embedding_table;
  std::string vocabulary;
  std::string keyboard;
  std::string mask_marker = "<mask>";
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::string benchmark_path;
  BenchmarkFormat benchmark_format = BenchmarkFormat::kJsonl;
  std::vector<ModelHandle> models;
  ScoreMode scoring = ScoreMode::kLogprob;
  PromptTemplate prompt;
  Recipe recipe = Recipe::kChar;
  RecipeOptions recipe_options;
  ConstraintSet constraints;
  GoalKind goal = GoalKind::kSelectiveUntargeted;
  std::size_t budget = 512;
  double threshold = 0.10;
  Aggregate aggregate = Aggregate::kMean;
  double max_quarantine_fraction = 0.10;
  SurrogateConfig surrogate;
  // Constraints for paraphrase selection: overlap off (a paraphrase rewrites
  // most words) and references judged by response consistency.
  ConstraintSet surrogate_constraints = [] {
    ConstraintSet c;
    c.overlap.enabled = false;
    c.selective.reference_mode = ReferenceMode::kPreserveResponse;
    return c;
  }();
  std::string out_dir = "out";
  std::string cache;
  bool trace = false;
  // 0 picks the hardware concurrency capped by endpoint limits.
  std::size_t workers = 0;

  // Not serialized.
  std::filesystem::path base_dir;

  [[nodiscard]] std::filesystem::path resolve(const std::string& p) const {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    if (path.is_absolute() || base_dir.empty()) return path;
    return base_dir / path;
  }

  [[nodiscard]] const ModelHandle* find_model(std::string_view name) const {
    for (const auto& m : models) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }

  [[nodiscard]] std::vector<const ModelHandle*> with_role(Role r) const {
    std::vector<const ModelHandle*> out;
    for (const auto& m : models) {
      if (m.role == r) out.push_back(&m);
    }
    return out;
  }
};

inline Json model_to_json(const ModelHandle& m) {
  return {{"name", m.name},
          {"role", to_string(m.role)},
          {"endpoint", m.endpoint},
          {"model_id", m.model_id},
          {"api_key_env", m.api_key_env},
          {"max_in_flight", m.max_in_flight},
          {"temperature", m.decoding.temperature},
          {"max_new_tokens", m.decoding.max_new_tokens},
          {"top_logprobs", m.decoding.top_logprobs}};
}

inline Json config_to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  j["benchmark"] = {{"path", c.benchmark_path},
                    {"format", c.benchmark_format == BenchmarkFormat::kJsonl ? "jsonl" : "mmlu-csv"}};
  j["models"] = Json::array();
  for (const auto& m : c.models) j["models"].push_back(model_to_json(m));
  j["scoring"] = to_string(c.scoring);
  j["prompt"] = {{"system", c.prompt.system},
                 {"user", c.prompt.user},
                 {"default_system", c.prompt.default_system}};
  j["recipe"] = to_string(c.recipe);
  j["recipe_options"] = {{"k", c.recipe_options.k},
                         {"embedding_table", c.recipe_options.embedding_table},
                         {"vocabulary", c.recipe_options.vocabulary},
                         {"keyboard", c.recipe_options.keyboard},
                         {"mask_marker", c.recipe_options.mask_marker}};
  j["constraints"] = constraints_to_json(c.constraints);
  j["goal"] = to_string(c.goal);
  j["budget"] = c.budget;
  j["threshold"] = c.threshold;
  j["aggregate"] = to_string(c.aggregate);
  j["max_quarantine_fraction"] = c.max_quarantine_fraction;
  j["surrogate"] = {{"m", c.surrogate.m},
                    {"w", c.surrogate.w},
                    {"direction", to_string(c.surrogate.direction)},
                    {"iterations", c.surrogate.iterations},
                    {"temperature", c.surrogate.temperature},
                    {"max_tokens", c.surrogate.max_tokens},
                    {"method", c.surrogate.method},
                    {"trainer", c.surrogate.trainer},
                    {"constraints", constraints_to_json(c.surrogate_constraints)}};
  j["out"] = c.out_dir;
  j["cache"] = c.cache;
  j["trace"] = c.trace;
  j["workers"] = c.workers;
  return j;
}

// Parses without cross-field validation so that flag overrides can be applied
// first; call validate_config afterwards. Unknown keys are errors.
inline RunConfig config_from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::set<std::string> kKeys{
      "seed",      "benchmark", "models",     "scoring",   "prompt",
      "recipe",    "recipe_options", "constraints", "goal", "budget",
      "threshold", "aggregate", "max_quarantine_fraction", "surrogate", "out",
      "cache",     "trace",     "workers"};
  std::vector<std::string> errors;
  for (const auto& [k, _] : j.items()) {
    if (!kKeys.count(k)) errors.push_back("unknown key '" + k + "'");
  }
  RunConfig c;
  c.base_dir = base_dir;
  auto guard = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      errors.push_back(std::string(what) + ": " + e.what());
    } catch (const Error& e) {
      errors.push_back(std::string(what) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      errors.push_back(std::string(what) + ": " + e.what());
    }
  };
  guard("seed", [&] {
    if (j.contains("seed") && !j["seed"].is_null()) c.seed = j["seed"].get<std::uint64_t>();
  });
  guard("benchmark", [&] {
    if (!j.contains("benchmark")) return;
    const Json& b = j["benchmark"];
    c.benchmark_path = b.at("path").get<std::string>();
    if (b.contains("format")) c.benchmark_format = parse_benchmark_format(b["format"].get<std::string>());
  });
  guard("models", [&] {
    if (!j.contains("models")) return;
    for (const auto& m : j["models"]) {
      ModelHandle h;
      h.name = m.at("name").get<std::string>();
      h.role = parse_role(m.at("role").get<std::string>());
      h.endpoint = m.at("endpoint").get<std::string>();
      h.model_id = m.value("model_id", std::string());
      h.api_key_env = m.value("api_key_env", std::string());
      h.max_in_flight = m.value("max_in_flight", h.max_in_flight);
      h.decoding.temperature = m.value("temperature", h.decoding.temperature);
      h.decoding.max_new_tokens = m.value("max_new_tokens", h.decoding.max_new_tokens);
      h.decoding.top_logprobs = m.value("top_logprobs", h.decoding.top_logprobs);
      if (m.contains("api_key")) throw ConfigError("model '" + h.name + "': keys belong in api_key_env");
      c.models.push_back(std::move(h));
    }
  });
  guard("scoring", [&] {
    if (j.contains("scoring")) c.scoring = parse_score_mode(j["scoring"].get<std::string>());
  });
  guard("prompt", [&] {
    if (!j.contains("prompt")) return;
    c.prompt.system = j["prompt"].value("system", c.prompt.system);
    c.prompt.user = j["prompt"].value("user", c.prompt.user);
    c.prompt.default_system = j["prompt"].value("default_system", c.prompt.default_system);
    validate_template(c.prompt);
  });
  guard("recipe", [&] {
    if (j.contains("recipe")) c.recipe = parse_recipe(j["recipe"].get<std::string>());
  });
  guard("recipe_options", [&] {
    if (!j.contains("recipe_options")) return;
    const Json& r = j["recipe_options"];
    c.recipe_options.k = r.value("k", c.recipe_options.k);
    c.recipe_options.embedding_table = r.value("embedding_table", std::string());
    c.recipe_options.vocabulary = r.value("vocabulary", std::string());
    c.recipe_options.keyboard = r.value("keyboard", std::string());
    c.recipe_options.mask_marker = r.value("mask_marker", c.recipe_options.mask_marker);
  });
  guard("constraints", [&] {
    if (j.contains("constraints")) c.constraints = constraints_from_json(j["constraints"]);
  });
  guard("goal", [&] {
    if (j.contains("goal")) c.goal = parse_goal(j["goal"].get<std::string>());
  });
  guard("budget", [&] { c.budget = j.value("budget", c.budget); });
  guard("threshold", [&] { c.threshold = j.value("threshold", c.threshold); });
  guard("aggregate", [&] {
    if (j.contains("aggregate")) c.aggregate = parse_aggregate(j["aggregate"].get<std::string>());
  });
  guard("max_quarantine_fraction",
        [&] { c.max_quarantine_fraction = j.value("max_quarantine_fraction", c.max_quarantine_fraction); });
  guard("surrogate", [&] {
    if (!j.contains("surrogate")) return;
    const Json& s = j["surrogate"];
    c.surrogate.m = s.value("m", c.surrogate.m);
    c.surrogate.w = s.value("w", c.surrogate.w);
    if (s.contains("direction")) {
      c.surrogate.direction = parse_surrogate_direction(s["direction"].get<std::string>());
    }
    c.surrogate.iterations = s.value("iterations", c.surrogate.iterations);
    c.surrogate.temperature = s.value("temperature", c.surrogate.temperature);
    c.surrogate.max_tokens = s.value("max_tokens", c.surrogate.max_tokens);
    c.surrogate.method = s.value("method", c.surrogate.method);
    c.surrogate.trainer = s.value("trainer", c.surrogate.trainer);
    if (s.contains("constraints")) {
      c.surrogate_constraints = constraints_from_json(s["constraints"], c.surrogate_constraints);
    }
  });
  guard("out", [&] { c.out_dir = j.value("out", c.out_dir); });
  guard("cache", [&] { c.cache = j.value("cache", c.cache); });
  guard("trace", [&] { c.trace = j.value("trace", c.trace); });
  guard("workers", [&] { c.workers = j.value("workers", c.workers); });

  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  return config_from_json(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

// Cross-field checks. All problems are reported together.
inline void validate_config(const RunConfig& c, bool need_references = true) {
  std::vector<std::string> errors;
  if (!c.seed) errors.push_back("seed is mandatory");
  if (c.benchmark_path.empty()) errors.push_back("benchmark.path is missing");
  std::set<std::string> names;
  for (const auto& m : c.models) {
    if (m.name.empty()) errors.push_back("a model has an empty name");
    if (!names.insert(m.name).second) errors.push_back("duplicate model name '" + m.name + "'");
    if (!m.is_mock() && !m.endpoint.starts_with("http://") && !m.endpoint.starts_with("https://")) {
      errors.push_back("model '" + m.name + "': endpoint must be mock:<spec> or an http(s) URL");
    }
    if (m.max_in_flight == 0) errors.push_back("model '" + m.name + "': max_in_flight must be >= 1");
  }
  const auto targets = c.with_role(Role::kTarget);
  if (targets.size() != 1) {
    errors.push_back("exactly one model must have the target role (found " +
                     std::to_string(targets.size()) + ")");
  }
  if (need_references && c.with_role(Role::kReference).empty()) {
    errors.push_back("at least one reference model is required");
  }
  if (c.budget == 0) errors.push_back("budget must be positive");
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) errors.push_back("threshold must lie in [0, 1]");
  if (!(c.max_quarantine_fraction >= 0.0 && c.max_quarantine_fraction <= 1.0)) {
    errors.push_back("max_quarantine_fraction must lie in [0, 1]");
  }
  if (c.recipe == Recipe::kMaskfill && c.with_role(Role::kMaskfill).empty()) {
    errors.push_back("recipe maskfill needs a model with the maskfill role");
  }
  if (c.recipe == Recipe::kEmbed && c.recipe_options.embedding_table.empty() &&
      (c.with_role(Role::kEmbedder).empty() || c.recipe_options.vocabulary.empty())) {
    errors.push_back(
        "recipe embed needs recipe_options.embedding_table, or an embedder model plus "
        "recipe_options.vocabulary");
  }
  const std::string& enc = c.constraints.semantic.encoder;
  if (c.constraints.semantic.enabled && !enc.starts_with("mock:")) {
    const ModelHandle* m = c.find_model(enc);
    if (!m || m->role != Role::kEmbedder) {
      errors.push_back("constraints.semantic.encoder '" + enc +
                       "' is neither mock:bow nor an embedder model");
    }
  }
  try {
    validate_surrogate_config(c.surrogate);
  } catch (const ConfigError& e) {
    errors.push_back(e.what());
  }
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ConfigError(msg);
  }
}

}  // namespace selattack
