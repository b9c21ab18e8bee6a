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

// Model access. Everything the attack engine learns about a model goes
// through one of the interfaces below; HTTP clients live in http.hpp and
// deterministic mocks in mock.hpp.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/digest.hpp"
#include "selattack/error.hpp"
#include "selattack/text.hpp"

namespace selattack {

enum class Role { kTarget, kReference, kGenerator, kEmbedder, kMaskfill };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::kTarget: return "target";
    case Role::kReference: return "reference";
    case Role::kGenerator: return "generator";
    case Role::kEmbedder: return "embedder";
    case Role::kMaskfill: return "maskfill";
  }
  return "?";
}

inline Role parse_role(std::string_view s) {
  for (auto r : {Role::kTarget, Role::kReference, Role::kGenerator, Role::kEmbedder,
                 Role::kMaskfill}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown model role '" + std::string(s) + "'");
}

enum class ScoreMode { kLogprob, kLetter };

inline std::string_view to_string(ScoreMode m) {
  return m == ScoreMode::kLogprob ? "logprob" : "letter";
}

inline ScoreMode parse_score_mode(std::string_view s) {
  if (s == "logprob") return ScoreMode::kLogprob;
  if (s == "letter") return ScoreMode::kLetter;
  throw ConfigError("unknown scoring mode '" + std::string(s) + "' (logprob, letter)");
}

struct Decoding {
  double temperature = 0.0;
  int max_new_tokens = 1;
  int top_logprobs = 20;
};

struct ModelHandle {
  std::string name;
  Role role = Role::kReference;
  // "mock:<spec>" or an http(s) base URL.
  std::string endpoint;
  // Remote model identifier sent on the wire; defaults to `name`.
  std::string model_id;
  // Environment variable holding the API key; empty for none.
  std::string api_key_env;
  Decoding decoding;
  std::size_t max_in_flight = 4;

  [[nodiscard]] bool is_mock() const { return endpoint.starts_with("mock:"); }
  [[nodiscard]] std::string mock_spec() const { return endpoint.substr(5); }
};

struct OptionDistribution {
  std::vector<double> probs;
  std::vector<double> logits;
  std::size_t chosen = 0;

  friend bool operator==(const OptionDistribution&, const OptionDistribution&) = default;
};

// First index wins ties.
inline std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

inline OptionDistribution softmax(std::vector<double> logits) {
  if (logits.empty()) throw ScoringError("softmax over zero options");
  OptionDistribution d;
  const double peak = *std::max_element(logits.begin(), logits.end());
  d.probs.resize(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.probs[i] = std::exp(logits[i] - peak);
    total += d.probs[i];
  }
  for (double& p : d.probs) p /= total;
  d.chosen = argmax(logits);
  d.logits = std::move(logits);
  return d;
}

inline double log_sum_exp(const std::vector<double>& xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(xs.begin(), xs.end());
  double s = 0.0;
  for (double x : xs) s += std::exp(x - peak);
  return peak + std::log(s);
}

// First standalone single-letter token naming one of the first `n_options`
// letters, case-insensitive. "B) Because" -> B; "The answer is 42" -> none.
inline std::optional<std::size_t> normalize_letter(std::string_view raw, std::size_t n_options) {
  std::size_t i = 0;
  while (i < raw.size()) {
    if (!std::isalpha(static_cast<unsigned char>(raw[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < raw.size() && std::isalpha(static_cast<unsigned char>(raw[j]))) ++j;
    if (j - i == 1) {
      const auto idx = letter_index(raw[i]);
      if (idx && *idx < n_options) return idx;
    }
    i = j;
  }
  return std::nullopt;
}

struct Verdict {
  std::string item_id;
  std::string model;
  std::optional<std::size_t> letter;  // nullopt is INVALID
  bool correct = false;
  std::optional<OptionDistribution> distribution;
  std::optional<std::string> raw_text;

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

inline Json verdict_to_json(const Verdict& v) {
  Json j;
  j["item_id"] = v.item_id;
  j["model"] = v.model;
  j["letter"] = v.letter ? Json(std::string(1, option_letter(*v.letter))) : Json(nullptr);
  j["correct"] = v.correct;
  if (v.distribution) {
    j["distribution"] = {{"probs", v.distribution->probs},
                         {"logits", v.distribution->logits},
                         {"chosen", v.distribution->chosen}};
  } else {
    j["distribution"] = nullptr;
  }
  j["raw_text"] = v.raw_text ? Json(*v.raw_text) : Json(nullptr);
  return j;
}

inline Verdict verdict_from_json(const Json& j) {
  Verdict v;
  v.item_id = j.at("item_id").get<std::string>();
  v.model = j.at("model").get<std::string>();
  if (!j.at("letter").is_null()) {
    const auto s = j["letter"].get<std::string>();
    const auto idx = s.size() == 1 ? letter_index(s[0]) : std::nullopt;
    if (!idx) throw ParseError("verdict letter '" + s + "' is not A-H");
    v.letter = idx;
  }
  v.correct = j.at("correct").get<bool>();
  if (j.contains("distribution") && !j["distribution"].is_null()) {
    const auto& d = j["distribution"];
    v.distribution = OptionDistribution{d.at("probs").get<std::vector<double>>(),
                                        d.at("logits").get<std::vector<double>>(),
                                        d.at("chosen").get<std::size_t>()};
  }
  if (j.contains("raw_text") && !j["raw_text"].is_null()) {
    v.raw_text = j["raw_text"].get<std::string>();
  }
  return v;
}

// Item facts visible to test mocks only. HTTP clients never read them.
struct ItemContext {
  std::size_t n_options = 4;
  std::size_t gold = 0;
};

class AnswerModel {
 public:
  virtual ~AnswerModel() = default;
  // Raw per-option scores at the answer position; log-probabilities for
  // endpoints. Size equals ctx.n_options.
  virtual std::vector<double> option_logits(const RenderedPrompt& prompt,
                                            const ItemContext& ctx) = 0;
  // Short deterministic completion for letter mode.
  virtual std::string complete(const RenderedPrompt& prompt, const ItemContext& ctx) = 0;
  // True when answers depend on ItemContext, so cache keys must include it.
  [[nodiscard]] virtual bool reads_context() const { return false; }
};

inline OptionDistribution score_options(AnswerModel& model, const RenderedPrompt& prompt,
                                        const ItemContext& ctx) {
  auto logits = model.option_logits(prompt, ctx);
  if (logits.size() != ctx.n_options) {
    throw ScoringError("model returned " + std::to_string(logits.size()) + " scores for " +
                       std::to_string(ctx.n_options) + " options");
  }
  return softmax(std::move(logits));
}

struct LetterAnswer {
  std::optional<std::size_t> letter;
  std::string raw;
};

inline LetterAnswer answer_letter(AnswerModel& model, const RenderedPrompt& prompt,
                                  const ItemContext& ctx) {
  std::string raw = model.complete(prompt, ctx);
  return {normalize_letter(raw, ctx.n_options), std::move(raw)};
}

struct GenerationRequest {
  std::string system;
  std::string user;
  double temperature = 0.7;
  int max_tokens = 256;
  std::uint64_t seed = 0;
  // Position within a sampling batch; mocks key on it, endpoints ignore it.
  std::size_t sample_index = 0;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

struct MaskFill {
  std::string token;
  double score = 0.0;
};

struct MaskRequest {
  std::string masked_text;
  std::size_t top_k = 0;
  // Not sent on the wire; lets table mocks key on the masked word.
  std::string original_word;
};

class MaskFiller {
 public:
  virtual ~MaskFiller() = default;
  virtual std::vector<MaskFill> fill(const MaskRequest& request) = 0;
};

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::vector<double> encode(std::string_view text) = 0;
};

// Cosine similarity; the shorter vector is zero-padded. Two zero vectors are
// identical (1.0); one zero vector against a non-zero one scores 0.0.
inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = std::max(a.size(), b.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = i < a.size() ? a[i] : 0.0;
    const double y = i < b.size() ? b[i] : 0.0;
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace selattack
