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


#include <gtest/gtest.h>

#include <string>

#include "selattack/config.hpp"
#include "support/testing.hpp"

using namespace selattack;
using namespace selattack::testing;

namespace {

Json minimal() {
  return Json::parse(R"({
    "seed": 1,
    "benchmark": {"path": "b.jsonl"},
    "models": [
      {"name": "t", "role": "target", "endpoint": "mock:always-gold"},
      {"name": "r", "role": "reference", "endpoint": "http://127.0.0.1:8000"}
    ]
  })");
}

std::string config_error(const Json& j, bool validate = true) {
  try {
    const auto c = config_from_json(j);
    if (validate) validate_config(c);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, MinimalIsValidWithDefaults) {
  const auto c = config_from_json(minimal(), "/base");
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(*c.seed, 1u);
  EXPECT_EQ(c.recipe, Recipe::kChar);
  EXPECT_EQ(c.budget, 512u);
  EXPECT_DOUBLE_EQ(c.threshold, 0.10);
  EXPECT_EQ(c.aggregate, Aggregate::kMean);
  EXPECT_EQ(c.goal, GoalKind::kSelectiveUntargeted);
  EXPECT_EQ(c.resolve("b.jsonl"), std::filesystem::path("/base/b.jsonl"));
  EXPECT_EQ(c.resolve("/abs/x"), std::filesystem::path("/abs/x"));
  EXPECT_FALSE(c.surrogate_constraints.overlap.enabled);
  EXPECT_EQ(c.surrogate_constraints.selective.reference_mode, ReferenceMode::kPreserveResponse);
}

TEST(Config, UnknownKeysAndBadValuesAreCollected) {
  Json j = minimal();
  j["colour"] = "blue";
  j["recipe"] = "bae";
  j["aggregate"] = "median";
  const std::string msg = config_error(j, false);
  EXPECT_NE(msg.find("unknown key 'colour'"), std::string::npos) << msg;
  EXPECT_NE(msg.find("recipe"), std::string::npos) << msg;
  EXPECT_NE(msg.find("median"), std::string::npos) << msg;
}

TEST(Config, InlineApiKeyRejected) {
  Json j = minimal();
  j["models"][1]["api_key"] = "sk-secret";
  const std::string msg = config_error(j, false);
  EXPECT_NE(msg.find("api_key_env"), std::string::npos) << msg;
  EXPECT_EQ(msg.find("sk-secret"), std::string::npos);
}

TEST(Config, CrossFieldValidation) {
  Json j = minimal();
  j.erase("seed");
  j["models"].push_back({{"name", "t"}, {"role", "target"}, {"endpoint", "ftp://x"}});
  j["recipe"] = "maskfill";
  j["threshold"] = 1.5;
  const std::string msg = config_error(j);
  for (const char* needle : {"seed is mandatory", "duplicate model name 't'", "endpoint must be",
                             "exactly one model must have the target role (found 2)",
                             "maskfill role", "threshold must lie"}) {
    EXPECT_NE(msg.find(needle), std::string::npos) << needle << "\n" << msg;
  }
}

TEST(Config, ReferencesOptionalForEvaluate) {
  Json j = minimal();
  j["models"].erase(1);
  EXPECT_NE(config_error(j).find("at least one reference"), std::string::npos);
  EXPECT_NO_THROW(validate_config(config_from_json(j), false));
}

TEST(Config, EmbedRecipeNeedsASource) {
  Json j = minimal();
  j["recipe"] = "embed";
  EXPECT_NE(config_error(j).find("recipe embed needs"), std::string::npos);
  j["recipe_options"] = {{"embedding_table", "t.tsv"}};
  EXPECT_EQ(config_error(j), "");
}

TEST(Config, SemanticEncoderMustExist) {
  Json j = minimal();
  j["constraints"] = {{"semantic", {{"encoder", "sbert"}}}};
  EXPECT_NE(config_error(j).find("neither mock:bow nor an embedder"), std::string::npos);
  j["models"].push_back({{"name", "sbert"}, {"role", "embedder"}, {"endpoint", "http://h/e"}});
  EXPECT_EQ(config_error(j), "");
}

TEST(Config, SurrogateSection) {
  Json j = minimal();
  j["surrogate"] = {{"m", 4}, {"w", 0.95}, {"direction", "maximize-target"}, {"iterations", 2},
                    {"method", "sft"}, {"trainer", "cmd:train --method {method} --data {data} --serve 8765"},
                    {"constraints", {{"semantic", {{"threshold", 0.6}}}}}};
  const auto c = config_from_json(j);
  EXPECT_EQ(c.surrogate.m, 4u);
  EXPECT_DOUBLE_EQ(c.surrogate.w, 0.95);
  EXPECT_EQ(c.surrogate.direction, SurrogateDirection::kMaximizeTarget);
  EXPECT_EQ(c.surrogate.method, "sft");
  EXPECT_DOUBLE_EQ(c.surrogate_constraints.semantic.threshold, 0.6);
  // Section defaults survive a partial override.
  EXPECT_FALSE(c.surrogate_constraints.overlap.enabled);
  j["surrogate"]["w"] = 0.0;
  EXPECT_NE(config_error(j).find("surrogate.w"), std::string::npos);
}

TEST(Config, JsonRoundTrip) {
  Json j = minimal();
  j["recipe"] = "reduction";
  j["budget"] = 64;
  j["aggregate"] = "max";
  const auto c = config_from_json(j);
  const auto back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  EXPECT_EQ(back.recipe, Recipe::kReduction);
  EXPECT_EQ(back.budget, 64u);
  EXPECT_EQ(back.aggregate, Aggregate::kMax);
}

TEST(Config, LoadResolvesRelativeToFile) {
  TempDir dir;
  write_file(dir / "c.json", minimal().dump());
  const auto c = load_config(dir / "c.json");
  EXPECT_EQ(c.resolve(c.benchmark_path), dir / "b.jsonl");
  write_file(dir / "bad.json", "{not json");
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
  EXPECT_THROW(load_config(dir / "missing.json"), ConfigError);
}

TEST(Config, ShippedSampleValidates) {
  const auto c = load_config(std::filesystem::path(SELATTACK_SAMPLES) / "hermetic" / "config.json");
  EXPECT_NO_THROW(validate_config(c));
  EXPECT_EQ(c.recipe, Recipe::kMaskfill);
}
