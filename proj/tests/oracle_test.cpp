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

#include <cmath>
#include <numeric>
#include <string>

#include "selattack/cache.hpp"
#include "selattack/mock.hpp"
#include "selattack/oracle.hpp"
#include "support/testing.hpp"

using namespace selattack;
using selattack::testing::for_all;
using selattack::testing::make_item;
using selattack::testing::TempDir;

// Reference probabilities computed with a standalone Python script.
TEST(Softmax, KnownLogits) {
  const auto d = softmax({2, 1, 0, -1});
  const double want[] = {0.6439142598879724, 0.23688281808991013, 0.08714431874203257,
                         0.03205860328008499};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(d.probs[static_cast<std::size_t>(i)], want[i], 1e-12);
  EXPECT_EQ(d.chosen, 0u);
}

TEST(Softmax, EqualLogitsAreUniform) {
  for (double c : {-50.0, 0.0, 3.5, 700.0}) {
    const auto d = softmax({c, c, c, c});
    for (double p : d.probs) EXPECT_NEAR(p, 0.25, 1e-15);
    EXPECT_EQ(d.chosen, 0u);
  }
  EXPECT_THROW(softmax({}), ScoringError);
}

TEST(Softmax, NormalizationAndArgmaxProperty) {
  const auto why = for_all(2000, 21, [](std::mt19937_64& rng) -> std::string {
    std::uniform_int_distribution<int> n(2, 8);
    std::uniform_real_distribution<double> x(-40.0, 40.0);
    std::vector<double> logits(static_cast<std::size_t>(n(rng)));
    for (auto& l : logits) l = x(rng);
    const auto d = softmax(logits);
    const double sum = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) return "sum " + std::to_string(sum);
    if (argmax(d.probs) != argmax(logits) || d.chosen != argmax(logits)) return "argmax differs";
    return {};
  });
  EXPECT_TRUE(why.empty()) << why;
}

TEST(Softmax, ShiftInvarianceProperty) {
  const auto why = for_all(2000, 22, [](std::mt19937_64& rng) -> std::string {
    std::uniform_int_distribution<int> n(2, 8);
    std::uniform_real_distribution<double> x(-20.0, 20.0);
    std::uniform_real_distribution<double> k(-500.0, 500.0);
    std::vector<double> logits(static_cast<std::size_t>(n(rng)));
    for (auto& l : logits) l = x(rng);
    const double shift = k(rng);
    std::vector<double> shifted = logits;
    for (auto& l : shifted) l += shift;
    const auto a = softmax(logits);
    const auto b = softmax(shifted);
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (std::abs(a.probs[i] - b.probs[i]) > 1e-12) return "shift changed probs";
    }
    if (a.chosen != b.chosen) return "shift changed choice";
    return {};
  });
  EXPECT_TRUE(why.empty()) << why;
}

TEST(Letters, NormalizationRule) {
  EXPECT_EQ(normalize_letter("B) Because of gravity", 4), 1u);
  EXPECT_EQ(normalize_letter(" c", 4), 2u);
  EXPECT_FALSE(normalize_letter("The answer is 42", 4).has_value());
  EXPECT_FALSE(normalize_letter("E", 4).has_value());
  EXPECT_EQ(normalize_letter("Answer: (D)", 4), 3u);
  // "I" is a word here, not an option letter for four options.
  EXPECT_EQ(normalize_letter("I think A", 4), 0u);
}

TEST(Verdicts, JsonRoundTrip) {
  Verdict v{"q1", "m", 2, true, softmax({0, 0, 1}), std::nullopt};
  EXPECT_EQ(verdict_from_json(verdict_to_json(v)), v);
  Verdict invalid{"q1", "m", std::nullopt, false, std::nullopt, std::string("no idea")};
  EXPECT_EQ(verdict_from_json(verdict_to_json(invalid)), invalid);
  EXPECT_EQ(verdict_probs(invalid, 3), (std::vector<double>{0, 0, 0}));
}

TEST(Cosine, Conventions) {
  EXPECT_DOUBLE_EQ(cosine({1, 0}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(cosine({2, 2}, {1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(cosine({}, {}), 1.0);
  EXPECT_DOUBLE_EQ(cosine({0, 0}, {1}), 0.0);
  EXPECT_NEAR(cosine({1, 1, 1}, {1, 1, 1, 1}), 3.0 / std::sqrt(12.0), 1e-15);
}

TEST(Mocks, AlwaysGoldAndAlwaysLetter) {
  const auto item = make_item("i", "Which?", {"a", "b", "c", "d"}, 2);
  Evaluator gold("g", make_mock("always-gold"), ScoreMode::kLogprob, {});
  Evaluator a("a", make_mock("always:A"), ScoreMode::kLetter, {});
  EXPECT_TRUE(gold.evaluate(item).correct);
  const auto va = a.evaluate(item);
  EXPECT_EQ(va.letter, 0u);
  EXPECT_FALSE(va.correct);
  EXPECT_EQ(va.raw_text, "A");
  const auto vg = gold.evaluate(item);
  EXPECT_NEAR(vg.distribution->probs[2], 0.8700485065614078, 1e-12);
}

TEST(Mocks, KeywordFiresOnPerturbedQuestion) {
  const auto item = make_item("i", "What is the height?", {"a", "b", "c", "d"}, 0);
  Evaluator kw("k", make_mock("keyword:altitude\xE2\x86\x92" "B"), ScoreMode::kLogprob, {});
  EXPECT_TRUE(kw.evaluate(item).correct);
  PerturbedItem p = identity_perturbation(item);
  p.question = "What is the altitude?";
  const auto v = kw.evaluate(item, p);
  EXPECT_FALSE(v.correct);
  EXPECT_EQ(v.letter, 1u);
}

TEST(Mocks, HashModNIsDeterministic) {
  const auto item = make_item("i", "Some question", {"a", "b", "c", "d", "e"}, 0);
  Evaluator a("h", make_mock("hash-mod-n"), ScoreMode::kLetter, {});
  Evaluator b("h", make_mock("hash-mod-n"), ScoreMode::kLetter, {});
  const auto va = a.evaluate(item);
  EXPECT_EQ(va, b.evaluate(item));
  // Independent recomputation of the documented rule.
  const auto prompt = render_prompt(item, nullptr, PromptTemplate{});
  EXPECT_EQ(va.letter, stable_hash(prompt.text()) % 5);
}

TEST(Mocks, TableMissingPromptIsAnError) {
  TempDir dir;
  const auto item = make_item("i", "Known", {"a", "b"}, 1);
  const auto prompt = render_prompt(item, nullptr, PromptTemplate{});
  Json line{{"prompt", prompt.text()}, {"logits", {0.0, 2.0}}};
  write_file(dir / "t.jsonl", line.dump() + "\n");
  Evaluator t("t", make_mock("table:" + (dir / "t.jsonl").string()), ScoreMode::kLogprob, {});
  EXPECT_TRUE(t.evaluate(item).correct);
  const auto other = make_item("j", "Unknown", {"a", "b"}, 1);
  EXPECT_THROW(t.evaluate(other), ScoringError);
}

TEST(Mocks, BadSpecs) {
  EXPECT_THROW(make_mock("sometimes"), ConfigError);
  EXPECT_THROW(make_mock("keyword:->B"), ConfigError);
  EXPECT_THROW(make_mock("always:Z"), Error);
  EXPECT_THROW(MockGenerator("inject:x"), ConfigError);
  EXPECT_THROW(make_mock_encoder("glove"), ConfigError);
}

TEST(Mocks, BagOfWordsCosine) {
  auto enc = make_mock_encoder("bow");
  const double c = cosine(enc->encode("the cat sat"), enc->encode("the cat sat down"));
  EXPECT_NEAR(c, 3.0 / std::sqrt(12.0), 1e-15);
  EXPECT_GE(c, 0.8);
}

TEST(Mocks, Generators) {
  MockGenerator echo("echo");
  GenerationRequest r{"sys", "Question text", 0.3, 64, 1, 0};
  EXPECT_EQ(echo.generate(r), "Question text");
  MockGenerator always("inject:zeta:1.0");
  MockGenerator never("inject:zeta:0.0");
  EXPECT_EQ(always.generate(r), "Question text (zeta)");
  EXPECT_EQ(never.generate(r), "Consider this: Question text");
  MockMaskFiller fills("fills:peak,altitude,height");
  const auto f = fills.fill({"the <mask>", 2, "top"});
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].token, "peak");
  EXPECT_GT(f[0].score, f[1].score);
}
