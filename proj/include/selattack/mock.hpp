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

// Deterministic stand-ins for every model role, selected by "mock:<spec>"
// endpoints. They make the whole pipeline runnable without a network.
//
// Answer models:
//   always-gold               answers the gold letter
//   always:<L>                answers letter L
//   keyword:<word>-><L>       answers L when the prompt contains <word>, else
//                             gold ("→" is accepted for "->")
//   hash-mod-n                letter = stable hash of the prompt mod n
//   table:<file>              JSONL {"prompt", "logits" | "text"} keyed on the
//                             full rendered prompt; unknown prompts are errors
// Generators:
//   echo                      returns the user message unchanged
//   script:<file>             JSON {question: [outputs]}; sample i gets
//                             outputs[i % size]
//   inject:<word>:<p>         sample i of a question carries <word> when a
//                             stable hash of (question, i) falls below p
// Mask fillers:
//   fills:<w1>,<w2>,...       the same fills for every mask, scores descending
//   fills-table:<file>        JSON {word: [fills]} keyed on the masked word
// Sentence encoders:
//   bow                       bag-of-words count vectors

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/digest.hpp"
#include "selattack/oracle.hpp"

namespace selattack {

namespace detail {

inline constexpr double kMockPeak = 3.0;

inline std::vector<double> peaked_logits(std::size_t n, std::size_t chosen) {
  std::vector<double> logits(n, 0.0);
  if (chosen < n) logits[chosen] = kMockPeak;
  return logits;
}

inline std::size_t parse_mock_letter(std::string_view s, std::string_view spec) {
  const auto idx = s.size() == 1 ? letter_index(s[0]) : std::nullopt;
  if (!idx) throw ConfigError("mock spec '" + std::string(spec) + "': '" + std::string(s) +
                              "' is not a letter A-H");
  return *idx;
}

}  // namespace detail

class MockAnswerModel final : public AnswerModel {
 public:
  enum class Kind { kAlwaysGold, kAlways, kKeyword, kHashModN };

  explicit MockAnswerModel(std::string_view spec) : spec_(spec) {
    if (spec == "always-gold") {
      kind_ = Kind::kAlwaysGold;
    } else if (spec == "hash-mod-n") {
      kind_ = Kind::kHashModN;
    } else if (spec.starts_with("always:")) {
      kind_ = Kind::kAlways;
      letter_ = detail::parse_mock_letter(spec.substr(7), spec);
    } else if (spec.starts_with("keyword:")) {
      kind_ = Kind::kKeyword;
      const std::string_view rest = spec.substr(8);
      std::size_t arrow = rest.find("->");
      std::size_t arrow_len = 2;
      if (arrow == std::string_view::npos) {
        arrow = rest.find("\xE2\x86\x92");
        arrow_len = 3;
      }
      if (arrow == std::string_view::npos || arrow == 0) {
        throw ConfigError("mock spec '" + std::string(spec) + "': expected keyword:<word>-><L>");
      }
      keyword_ = std::string(rest.substr(0, arrow));
      letter_ = detail::parse_mock_letter(rest.substr(arrow + arrow_len), spec);
    } else {
      throw ConfigError("unknown mock spec '" + std::string(spec) + "'");
    }
  }

  std::vector<double> option_logits(const RenderedPrompt& prompt,
                                    const ItemContext& ctx) override {
    return detail::peaked_logits(ctx.n_options, pick(prompt, ctx));
  }

  std::string complete(const RenderedPrompt& prompt, const ItemContext& ctx) override {
    const std::size_t choice = pick(prompt, ctx);
    if (choice >= ctx.n_options) return "?";
    return std::string(1, option_letter(choice));
  }

  [[nodiscard]] bool reads_context() const override { return kind_ != Kind::kAlways; }
  [[nodiscard]] const std::string& spec() const { return spec_; }

 private:
  std::size_t pick(const RenderedPrompt& prompt, const ItemContext& ctx) const {
    switch (kind_) {
      case Kind::kAlwaysGold: return ctx.gold;
      case Kind::kAlways: return letter_;
      case Kind::kKeyword:
        return contains_word(prompt.text(), keyword_) ? letter_ : ctx.gold;
      case Kind::kHashModN: return stable_hash(prompt.text()) % ctx.n_options;
    }
    return ctx.gold;
  }

  std::string spec_;
  Kind kind_ = Kind::kAlwaysGold;
  std::size_t letter_ = 0;
  std::string keyword_;
};

// Explicit prompt -> scores map loaded from JSONL.
class TableAnswerModel final : public AnswerModel {
 public:
  explicit TableAnswerModel(const std::filesystem::path& file) : source_(file.string()) {
    for_each_json_line(read_file(file), file.filename().string(),
                       [&](const Json& j, std::size_t line) {
                         Entry e;
                         if (!j.contains("prompt")) {
                           throw ParseError(source_ + " line " + std::to_string(line) +
                                            ": missing prompt");
                         }
                         if (j.contains("logits")) e.logits = j["logits"].get<std::vector<double>>();
                         if (j.contains("text")) e.text = j["text"].get<std::string>();
                         table_[j["prompt"].get<std::string>()] = std::move(e);
                       });
  }

  std::vector<double> option_logits(const RenderedPrompt& prompt,
                                    const ItemContext& ctx) override {
    const Entry& e = lookup(prompt);
    if (!e.logits.empty()) return e.logits;
    const auto letter = normalize_letter(e.text, ctx.n_options);
    return detail::peaked_logits(ctx.n_options, letter ? *letter : ctx.n_options);
  }

  std::string complete(const RenderedPrompt& prompt, const ItemContext&) override {
    const Entry& e = lookup(prompt);
    if (!e.text.empty() || e.logits.empty()) return e.text;
    return std::string(1, option_letter(argmax(e.logits)));
  }

 private:
  struct Entry {
    std::vector<double> logits;
    std::string text;
  };

  const Entry& lookup(const RenderedPrompt& prompt) const {
    const auto it = table_.find(prompt.text());
    if (it == table_.end()) {
      throw ScoringError("mock table '" + source_ + "' has no entry for prompt: " +
                         prompt.user.substr(0, 80));
    }
    return it->second;
  }

  std::string source_;
  std::unordered_map<std::string, Entry> table_;
};

inline std::shared_ptr<AnswerModel> make_mock(std::string_view spec) {
  if (spec.starts_with("table:")) return std::make_shared<TableAnswerModel>(spec.substr(6));
  return std::make_shared<MockAnswerModel>(spec);
}

class MockGenerator final : public TextGenerator {
 public:
  explicit MockGenerator(std::string_view spec) : spec_(spec) {
    if (spec == "echo") {
      kind_ = Kind::kEcho;
    } else if (spec.starts_with("script:")) {
      kind_ = Kind::kScript;
      const Json j = Json::parse(read_file(std::string(spec.substr(7))));
      for (const auto& [question, outputs] : j.items()) {
        script_[question] = outputs.get<std::vector<std::string>>();
      }
    } else if (spec.starts_with("inject:")) {
      kind_ = Kind::kInject;
      const auto parts = split(spec.substr(7), ':');
      if (parts.size() != 2 || parts[0].empty()) {
        throw ConfigError("mock spec '" + std::string(spec) + "': expected inject:<word>:<p>");
      }
      word_ = parts[0];
      try {
        rate_ = std::stod(parts[1]);
      } catch (const std::exception&) {
        throw ConfigError("mock spec '" + std::string(spec) + "': bad rate");
      }
    } else {
      throw ConfigError("unknown generator mock spec '" + std::string(spec) + "'");
    }
  }

  std::string generate(const GenerationRequest& request) override {
    switch (kind_) {
      case Kind::kEcho: return request.user;
      case Kind::kScript: {
        const auto it = script_.find(request.user);
        if (it == script_.end() || it->second.empty()) {
          throw OracleError("scripted generator has no outputs for: " + request.user.substr(0, 80));
        }
        return it->second[request.sample_index % it->second.size()];
      }
      case Kind::kInject: {
        const double u = stable_unit(request.user + "#" + std::to_string(request.sample_index));
        if (u < rate_) return request.user + " (" + word_ + ")";
        return "Consider this: " + request.user;
      }
    }
    return request.user;
  }

  [[nodiscard]] const std::string& spec() const { return spec_; }

 private:
  enum class Kind { kEcho, kScript, kInject };
  std::string spec_;
  Kind kind_ = Kind::kEcho;
  std::map<std::string, std::vector<std::string>> script_;
  std::string word_;
  double rate_ = 0.0;
};

class MockMaskFiller final : public MaskFiller {
 public:
  explicit MockMaskFiller(std::string_view spec) {
    if (spec.starts_with("fills:")) {
      for (auto& w : split(spec.substr(6), ',')) {
        if (!w.empty()) fixed_.push_back(std::move(w));
      }
    } else if (spec.starts_with("fills-table:")) {
      const Json j = Json::parse(read_file(std::string(spec.substr(12))));
      for (const auto& [word, fills] : j.items()) {
        table_[to_lower(word)] = fills.get<std::vector<std::string>>();
      }
      use_table_ = true;
    } else {
      throw ConfigError("unknown mask-fill mock spec '" + std::string(spec) + "'");
    }
  }

  std::vector<MaskFill> fill(const MaskRequest& request) override {
    const std::vector<std::string>* fills = &fixed_;
    if (use_table_) {
      const auto it = table_.find(to_lower(request.original_word));
      if (it == table_.end()) return {};
      fills = &it->second;
    }
    std::vector<MaskFill> out;
    for (std::size_t i = 0; i < fills->size() && i < request.top_k; ++i) {
      out.push_back({(*fills)[i], 1.0 - 0.05 * static_cast<double>(i)});
    }
    return out;
  }

 private:
  std::vector<std::string> fixed_;
  std::map<std::string, std::vector<std::string>> table_;
  bool use_table_ = false;
};

// Lower-cased word counts. Dimensions are assigned on first sight, so vectors
// from one encoder instance are comparable with each other.
class BagOfWordsEncoder final : public SentenceEncoder {
 public:
  std::vector<double> encode(std::string_view text) override {
    std::lock_guard lock(mutex_);
    std::vector<double> v(vocab_.size(), 0.0);
    for (const auto& w : words(text)) {
      auto [it, inserted] = vocab_.try_emplace(to_lower(w), vocab_.size());
      if (inserted) v.push_back(0.0);
      v[it->second] += 1.0;
    }
    return v;
  }

 private:
  std::mutex mutex_;
  std::unordered_map<std::string, std::size_t> vocab_;
};

inline std::shared_ptr<SentenceEncoder> make_mock_encoder(std::string_view spec) {
  if (spec == "bow") return std::make_shared<BagOfWordsEncoder>();
  throw ConfigError("unknown encoder mock spec '" + std::string(spec) + "'");
}

}  // namespace selattack
