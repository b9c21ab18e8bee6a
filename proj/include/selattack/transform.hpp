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

// Candidate edit generators at character, word and sentence level. Every
// generator only ever edits a question or system-instruction field; options
// are out of reach by type.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/digest.hpp"
#include "selattack/oracle.hpp"
#include "selattack/text.hpp"

namespace selattack {

inline constexpr std::string_view kParaphraseSystemPrompt =
    "You are a helpful assistant specialized in rephrasing academic and scientific questions.\n"
    "When given a question or prompt, your task is to produce a new version that preserves its "
    "original meaning while changing the wording and phrasing naturally.\n"
    "\n"
    "The rephrased question should remain semantically equivalent, grammatically correct, and "
    "appropriate for domains such as science, mathematics, engineering, social sciences, or the "
    "humanities (as represented in the MMLU benchmark).\n"
    "\n"
    "Do not answer the question --- only rephrase it clearly and precisely.";

struct CandidatePerturbation {
  std::string base_id;
  Edit edit;
  // Field text after applying `edit`.
  std::string text;
  Json provenance = Json::object();
  bool null_edit = false;
};

inline CandidatePerturbation make_candidate(std::string base_id, Field field,
                                            std::string_view text, EditKind kind, Span span,
                                            std::string after, Json provenance = Json::object()) {
  CandidatePerturbation c;
  c.base_id = std::move(base_id);
  c.edit = Edit{kind, field, span, std::string(text.substr(span.begin, span.size())),
                std::move(after)};
  c.text = replace_span(text, span, c.edit.after);
  c.null_edit = c.text == text;
  c.provenance = std::move(provenance);
  return c;
}

inline Span word_at(std::string_view text, std::size_t token_index) {
  const auto spans = word_spans(text);
  if (token_index >= spans.size()) {
    throw ValidationError("token index " + std::to_string(token_index) + " out of range (" +
                          std::to_string(spans.size()) + " word tokens)");
  }
  return spans[token_index];
}

// ---------------------------------------------------------------------------
// Character level

// Neighbouring keys used for insertion and substitution characters.
class KeyboardLayout {
 public:
  static KeyboardLayout qwerty() {
    KeyboardLayout k;
    const std::pair<char, const char*> rows[] = {
        {'q', "wa"},   {'w', "qeas"},  {'e', "wrsd"},   {'r', "etdf"},   {'t', "ryfg"},
        {'y', "tugh"}, {'u', "yihj"},  {'i', "uojk"},   {'o', "ipkl"},   {'p', "ol"},
        {'a', "qwsz"}, {'s', "weadzx"}, {'d', "erfscx"}, {'f', "rtdgcv"}, {'g', "tyfhvb"},
        {'h', "yugjbn"}, {'j', "uihknm"}, {'k', "iojlm"}, {'l', "opk"},  {'z', "asx"},
        {'x', "zsdc"}, {'c', "xdfv"},  {'v', "cfgb"},   {'b', "vghn"},   {'n', "bhjm"},
        {'m', "njk"},  {'1', "2q"},    {'2', "13w"},    {'3', "24e"},    {'4', "35r"},
        {'5', "46t"},  {'6', "57y"},   {'7', "68u"},    {'8', "79i"},    {'9', "80o"},
        {'0', "9p"},
    };
    for (const auto& [c, n] : rows) k.neighbors_[c] = n;
    return k;
  }

  // One line per key: <char><TAB><neighbours>.
  static KeyboardLayout load(const std::filesystem::path& file) {
    KeyboardLayout k;
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(file), '\n')) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab != 1 || line.size() < 3) {
        throw ParseError(file.filename().string() + " line " + std::to_string(line_no) +
                         ": expected <char><TAB><neighbours>");
      }
      k.neighbors_[static_cast<char>(std::tolower(static_cast<unsigned char>(line[0])))] =
          std::string(trim(std::string_view(line).substr(2)));
    }
    return k;
  }

  [[nodiscard]] std::string_view neighbors(char c) const {
    const auto it = neighbors_.find(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return it == neighbors_.end() ? std::string_view() : std::string_view(it->second);
  }

 private:
  std::map<char, std::string> neighbors_;
};

namespace detail {

inline char neighbor_of(const KeyboardLayout& layout, char c, std::mt19937_64& rng) {
  const auto n = layout.neighbors(c);
  if (n.empty()) return '\0';
  const char pick = n[rng() % n.size()];
  return std::isupper(static_cast<unsigned char>(c))
             ? static_cast<char>(std::toupper(static_cast<unsigned char>(pick)))
             : pick;
}

}  // namespace detail

// Adjacent swaps and single deletions at every position, plus one seeded
// keyboard-neighbour insertion and substitution per position.
inline std::vector<CandidatePerturbation> char_edits_at(
    const std::string& base_id, Field field, std::string_view text, Span span,
    std::uint64_t seed, const KeyboardLayout& layout = KeyboardLayout::qwerty()) {
  const std::string word(text.substr(span.begin, span.size()));
  std::vector<CandidatePerturbation> out;
  if (std::any_of(word.begin(), word.end(), [](char c) { return static_cast<unsigned char>(c) >= 0x80; })) {
    return out;
  }
  std::set<std::string> seen{word};
  auto emit = [&](EditKind kind, std::string after, std::size_t pos) {
    if (!seen.insert(after).second) return;
    out.push_back(make_candidate(base_id, field, text, kind, span, std::move(after),
                                 Json{{"position", pos}, {"seed", seed}}));
  };

  if (word.size() >= 2) {
    for (std::size_t i = 0; i + 1 < word.size(); ++i) {
      if (word[i] == word[i + 1]) continue;
      std::string w = word;
      std::swap(w[i], w[i + 1]);
      emit(EditKind::kCharSwap, std::move(w), i);
    }
    for (std::size_t i = 0; i < word.size(); ++i) {
      std::string w = word;
      w.erase(i, 1);
      emit(EditKind::kCharDelete, std::move(w), i);
    }
  }

  const std::uint64_t word_hash = stable_hash(word);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(span.begin),
                    static_cast<std::uint32_t>(word_hash), static_cast<std::uint32_t>(word_hash >> 32)};
  std::mt19937_64 rng(seq);
  for (std::size_t i = 0; i <= word.size(); ++i) {
    const char anchor = i < word.size() ? word[i] : word[i - 1];
    const char c = detail::neighbor_of(layout, anchor, rng);
    if (c == '\0') continue;
    std::string w = word;
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(i), c);
    emit(EditKind::kCharInsert, std::move(w), i);
  }
  for (std::size_t i = 0; i < word.size(); ++i) {
    const char c = detail::neighbor_of(layout, word[i], rng);
    if (c == '\0') continue;
    std::string w = word;
    w[i] = c;
    emit(EditKind::kCharSubstitute, std::move(w), i);
  }
  return out;
}

inline std::vector<CandidatePerturbation> char_edits(
    std::string_view text, std::size_t token_index, std::uint64_t seed,
    const KeyboardLayout& layout = KeyboardLayout::qwerty(), const std::string& base_id = "",
    Field field = Field::kQuestion) {
  return char_edits_at(base_id, field, text, word_at(text, token_index), seed, layout);
}

// ---------------------------------------------------------------------------
// Embedding neighbours

class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual std::optional<std::vector<double>> vector(std::string_view word) = 0;
  virtual const std::vector<std::string>& vocabulary() = 0;
};

// Static word vectors: one "<word><TAB><v1> <v2> ..." line per word.
class StaticEmbeddingTable final : public EmbeddingSource {
 public:
  StaticEmbeddingTable() = default;

  static StaticEmbeddingTable load(const std::filesystem::path& file) {
    StaticEmbeddingTable t;
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(file), '\n')) {
      ++line_no;
      if (trim(line).empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos || tab == 0) {
        throw ParseError(file.filename().string() + " line " + std::to_string(line_no) +
                         ": expected <word><TAB><vector>");
      }
      std::vector<double> v;
      std::string num;
      for (char c : std::string_view(line).substr(tab + 1)) {
        if (c == ' ' || c == ',' || c == '\t' || c == '\r') {
          if (!num.empty()) v.push_back(std::stod(num));
          num.clear();
        } else {
          num.push_back(c);
        }
      }
      if (!num.empty()) v.push_back(std::stod(num));
      t.add(line.substr(0, tab), std::move(v));
    }
    return t;
  }

  void add(std::string word, std::vector<double> v) {
    const std::string key = to_lower(word);
    if (!vectors_.count(key)) vocab_.push_back(key);
    vectors_[key] = std::move(v);
  }

  std::optional<std::vector<double>> vector(std::string_view word) override {
    const auto it = vectors_.find(to_lower(word));
    if (it == vectors_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<std::string>& vocabulary() override { return vocab_; }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
  std::vector<std::string> vocab_;
};

// Vectors fetched from an embedding endpoint for a fixed vocabulary, memoized.
class EncoderEmbeddings final : public EmbeddingSource {
 public:
  EncoderEmbeddings(std::shared_ptr<SentenceEncoder> encoder, std::vector<std::string> vocabulary)
      : encoder_(std::move(encoder)) {
    for (auto& w : vocabulary) vocab_.push_back(to_lower(w));
  }

  std::optional<std::vector<double>> vector(std::string_view word) override {
    const std::string key = to_lower(word);
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    auto v = encoder_->encode(key);
    memo_[key] = v;
    return v;
  }

  const std::vector<std::string>& vocabulary() override { return vocab_; }

 private:
  std::shared_ptr<SentenceEncoder> encoder_;
  std::vector<std::string> vocab_;
  std::mutex mutex_;
  std::unordered_map<std::string, std::vector<double>> memo_;
};

struct Neighbor {
  std::string word;
  double cosine = 0.0;
};

// k nearest vocabulary words by cosine, excluding `word`; ties by word.
inline std::vector<Neighbor> nearest_neighbors(EmbeddingSource& source, std::string_view word,
                                               std::size_t k) {
  if (k == 0) return {};
  const auto query = source.vector(word);
  if (!query) return {};
  const std::string self = to_lower(word);
  std::vector<Neighbor> all;
  for (const auto& w : source.vocabulary()) {
    if (w == self) continue;
    const auto v = source.vector(w);
    if (!v) continue;
    all.push_back({w, cosine(*query, *v)});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.cosine != b.cosine ? a.cosine > b.cosine : a.word < b.word;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

inline std::vector<CandidatePerturbation> embed_substitutions_at(
    const std::string& base_id, Field field, std::string_view text, Span span, std::size_t k,
    EmbeddingSource& source) {
  const std::string_view word = text.substr(span.begin, span.size());
  std::vector<CandidatePerturbation> out;
  std::size_t rank = 0;
  for (const auto& n : nearest_neighbors(source, word, k)) {
    out.push_back(make_candidate(base_id, field, text, EditKind::kWordEmbedSub, span,
                                 match_case(word, n.word),
                                 Json{{"knn_rank", rank++}, {"cosine", n.cosine}}));
  }
  return out;
}

inline std::vector<CandidatePerturbation> embed_substitutions(std::string_view text,
                                                              std::size_t token_index,
                                                              std::size_t k,
                                                              EmbeddingSource& source) {
  return embed_substitutions_at("", Field::kQuestion, text, word_at(text, token_index), k, source);
}

// ---------------------------------------------------------------------------
// Mask filling

inline std::vector<CandidatePerturbation> maskfill_substitutions_at(
    const std::string& base_id, Field field, std::string_view text, Span span, std::size_t k,
    MaskFiller& filler, std::string_view mask_marker = "<mask>") {
  if (k == 0) return {};
  const std::string word(text.substr(span.begin, span.size()));
  auto fills = filler.fill({replace_span(text, span, mask_marker), k, word});
  std::stable_sort(fills.begin(), fills.end(), [](const MaskFill& a, const MaskFill& b) {
    return a.score != b.score ? a.score > b.score : a.token < b.token;
  });
  std::vector<CandidatePerturbation> out;
  std::set<std::string> seen;
  for (const auto& f : fills) {
    const std::string token(trim(f.token));
    if (!is_alphabetic(token) || iequals(token, word)) continue;
    if (!seen.insert(to_lower(token)).second) continue;
    out.push_back(make_candidate(base_id, field, text, EditKind::kWordMaskfillSub, span,
                                 match_case(word, token), Json{{"fill_score", f.score}}));
    if (out.size() == k) break;
  }
  return out;
}

inline std::vector<CandidatePerturbation> maskfill_substitutions(
    std::string_view text, std::size_t token_index, std::size_t k, MaskFiller& filler,
    std::string_view mask_marker = "<mask>") {
  return maskfill_substitutions_at("", Field::kQuestion, text, word_at(text, token_index), k,
                                   filler, mask_marker);
}

// ---------------------------------------------------------------------------
// Word deletion

// Span removed when deleting the word at `word`: the word plus the following
// whitespace run, or the preceding run when the word ends the text or is
// followed by punctuation.
inline Span deletion_span(std::string_view text, Span word) {
  std::size_t end = word.end;
  while (end < text.size() && is_space_byte(text[end])) ++end;
  if (end > word.end && word.begin == 0) return {word.begin, end};
  std::size_t begin = word.begin;
  while (begin > 0 && is_space_byte(text[begin - 1])) --begin;
  if (begin < word.begin) return {begin, word.end};
  return {word.begin, end};
}

inline std::optional<CandidatePerturbation> word_deletion_at(const std::string& base_id,
                                                             Field field, std::string_view text,
                                                             Span word) {
  if (word_spans(text).size() < 2) return std::nullopt;
  return make_candidate(base_id, field, text, EditKind::kWordDelete, deletion_span(text, word), "",
                        Json{{"word", std::string(text.substr(word.begin, word.size()))}});
}

using TokenFilter = std::function<bool(Span)>;

// One deletion candidate per word token accepted by `allowed` (all when empty).
inline std::vector<CandidatePerturbation> input_reduction(std::string_view text,
                                                          const TokenFilter& allowed = {},
                                                          const std::string& base_id = "",
                                                          Field field = Field::kQuestion) {
  std::vector<CandidatePerturbation> out;
  const auto spans = word_spans(text);
  if (spans.size() < 2) return out;
  for (const auto& s : spans) {
    if (allowed && !allowed(s)) continue;
    out.push_back(*word_deletion_at(base_id, field, text, s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paraphrases

struct SamplingParams {
  double temperature = 0.3;
  int max_tokens = 256;
  std::uint64_t seed = 0;
};

struct RejectedParaphrase {
  std::string text;
  std::string reason;
};

struct ParaphraseBatch {
  std::vector<CandidatePerturbation> candidates;
  std::vector<RejectedParaphrase> rejected;
};

// True for outputs that answer the question instead of rephrasing it.
inline bool looks_like_answer(std::string_view output) {
  static const std::regex kAnswer(
      R"(^\s*(?:(?:the\s+)?(?:correct\s+|best\s+)?(?:answer|option|choice)\s*(?:is|:)?\s*)?\(?[A-Ha-h]\)?\s*(?:[.):]\s*.*)?$)",
      std::regex::icase);
  static const std::regex kAnswerPhrase(R"(^\s*(?:the\s+)?(?:correct\s+)?answer\s*(?:is|:))",
                                        std::regex::icase);
  const std::string s(output);
  return std::regex_match(s, kAnswer) || std::regex_search(s, kAnswerPhrase);
}

// Samples `m` paraphrases of the question. Exact duplicates collapse onto the
// first occurrence with their multiplicity recorded in the provenance.
inline ParaphraseBatch paraphrase_candidates(const BenchmarkItem& item, std::size_t m,
                                             TextGenerator& generator,
                                             const SamplingParams& sampling) {
  if (m == 0) throw ValidationError("paraphrase sampling needs m >= 1");
  ParaphraseBatch batch;
  std::map<std::string, std::size_t> index_of;
  const Span whole{0, item.question.size()};
  for (std::size_t i = 0; i < m; ++i) {
    GenerationRequest req;
    req.system = std::string(kParaphraseSystemPrompt);
    req.user = item.question;
    req.temperature = sampling.temperature;
    req.max_tokens = sampling.max_tokens;
    req.seed = sampling.seed + i;
    req.sample_index = i;
    const std::string text(trim(generator.generate(req)));
    if (text.empty()) {
      batch.rejected.push_back({text, "empty output"});
      continue;
    }
    if (looks_like_answer(text)) {
      batch.rejected.push_back({text, "output answers the question instead of rephrasing it"});
      continue;
    }
    if (auto it = index_of.find(text); it != index_of.end()) {
      auto& prov = batch.candidates[it->second].provenance;
      prov["multiplicity"] = prov["multiplicity"].get<std::size_t>() + 1;
      prov["sample_indices"].push_back(i);
      continue;
    }
    index_of[text] = batch.candidates.size();
    batch.candidates.push_back(make_candidate(
        item.id, Field::kQuestion, item.question, EditKind::kParaphrase, whole, text,
        Json{{"temperature", sampling.temperature},
             {"multiplicity", 1},
             {"sample_indices", Json::array({i})}}));
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Recipes: per-token candidate sources used by the greedy search.

class CandidateSource {
 public:
  virtual ~CandidateSource() = default;
  virtual std::vector<CandidatePerturbation> generate(const std::string& base_id, Field field,
                                                      std::string_view text, Span word) = 0;
};

class CharEditSource final : public CandidateSource {
 public:
  explicit CharEditSource(std::uint64_t seed, KeyboardLayout layout = KeyboardLayout::qwerty())
      : seed_(seed), layout_(std::move(layout)) {}
  std::vector<CandidatePerturbation> generate(const std::string& base_id, Field field,
                                              std::string_view text, Span word) override {
    return char_edits_at(base_id, field, text, word, seed_, layout_);
  }

 private:
  std::uint64_t seed_;
  KeyboardLayout layout_;
};

class EmbedSource final : public CandidateSource {
 public:
  EmbedSource(std::shared_ptr<EmbeddingSource> source, std::size_t k)
      : source_(std::move(source)), k_(k) {}
  std::vector<CandidatePerturbation> generate(const std::string& base_id, Field field,
                                              std::string_view text, Span word) override {
    return embed_substitutions_at(base_id, field, text, word, k_, *source_);
  }

 private:
  std::shared_ptr<EmbeddingSource> source_;
  std::size_t k_;
};

class MaskFillSource final : public CandidateSource {
 public:
  MaskFillSource(std::shared_ptr<MaskFiller> filler, std::size_t k, std::string marker = "<mask>")
      : filler_(std::move(filler)), k_(k), marker_(std::move(marker)) {}
  std::vector<CandidatePerturbation> generate(const std::string& base_id, Field field,
                                              std::string_view text, Span word) override {
    return maskfill_substitutions_at(base_id, field, text, word, k_, *filler_, marker_);
  }

 private:
  std::shared_ptr<MaskFiller> filler_;
  std::size_t k_;
  std::string marker_;
};

class ReductionSource final : public CandidateSource {
 public:
  std::vector<CandidatePerturbation> generate(const std::string& base_id, Field field,
                                              std::string_view text, Span word) override {
    auto c = word_deletion_at(base_id, field, text, word);
    if (!c) return {};
    return {std::move(*c)};
  }
};

}  // namespace selattack
