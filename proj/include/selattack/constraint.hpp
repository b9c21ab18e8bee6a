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

// Admissibility checks for candidate perturbations.
//
// The cheap checks (semantic, grammatical, overlap) are pure apart from the
// sentence encoder. The selective check queries every model and therefore
// runs last.

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/cache.hpp"
#include "selattack/distance.hpp"
#include "selattack/oracle.hpp"
#include "selattack/text.hpp"
#include "selattack/transform.hpp"

namespace selattack {

enum class ReferenceMode { kPreserveCorrect, kPreserveResponse };

inline std::string_view to_string(ReferenceMode m) {
  return m == ReferenceMode::kPreserveCorrect ? "preserve-correct" : "preserve-response";
}

inline ReferenceMode parse_reference_mode(std::string_view s) {
  if (s == "preserve-correct") return ReferenceMode::kPreserveCorrect;
  if (s == "preserve-response") return ReferenceMode::kPreserveResponse;
  throw ConfigError("unknown reference mode '" + std::string(s) +
                    "' (preserve-correct, preserve-response)");
}

struct SemanticConstraint {
  bool enabled = true;
  double threshold = 0.80;
  // "mock:bow" or the name of a model with the embedder role.
  std::string encoder = "mock:bow";
};

struct GrammaticalConstraint {
  bool enabled = true;
  // Extra "word<TAB>TAG" lexicon merged over the built-in one.
  std::string lexicon;
};

struct OverlapConstraint {
  bool enabled = true;
  double max_word_perturb_fraction = 0.2;
  // Applied to character-level edits; word substitutions replace whole words.
  std::size_t max_levenshtein_per_word = 2;
};

struct PretransformConstraint {
  std::vector<std::string> protected_tokens;
  bool protect_answer_markers = true;
};

struct SelectiveConstraint {
  bool enabled = true;
  ReferenceMode reference_mode = ReferenceMode::kPreserveCorrect;
};

// Options are never editable; there is no switch for that.
struct ConstraintSet {
  SemanticConstraint semantic;
  GrammaticalConstraint grammatical;
  OverlapConstraint overlap;
  PretransformConstraint pretransform;
  SelectiveConstraint selective;
};

inline Json constraints_to_json(const ConstraintSet& c) {
  Json j;
  j["semantic"] = {{"enabled", c.semantic.enabled},
                   {"threshold", c.semantic.threshold},
                   {"encoder", c.semantic.encoder}};
  j["grammatical"] = {{"enabled", c.grammatical.enabled}, {"lexicon", c.grammatical.lexicon}};
  j["overlap"] = {{"enabled", c.overlap.enabled},
                  {"max_word_perturb_fraction", c.overlap.max_word_perturb_fraction},
                  {"max_levenshtein_per_word", c.overlap.max_levenshtein_per_word}};
  j["pretransform"] = {{"protected_fields", Json::array({"options"})},
                       {"protected_tokens", c.pretransform.protected_tokens},
                       {"protect_answer_markers", c.pretransform.protect_answer_markers}};
  j["selective"] = {{"enabled", c.selective.enabled},
                    {"reference_mode", to_string(c.selective.reference_mode)}};
  return j;
}

inline ConstraintSet constraints_from_json(const Json& j, ConstraintSet c = {}) {
  auto section = [&](const char* name) -> const Json& {
    static const Json empty = Json::object();
    return j.contains(name) ? j[name] : empty;
  };
  try {
    const Json& s = section("semantic");
    c.semantic.enabled = s.value("enabled", c.semantic.enabled);
    c.semantic.threshold = s.value("threshold", c.semantic.threshold);
    c.semantic.encoder = s.value("encoder", c.semantic.encoder);
    const Json& g = section("grammatical");
    c.grammatical.enabled = g.value("enabled", c.grammatical.enabled);
    c.grammatical.lexicon = g.value("lexicon", c.grammatical.lexicon);
    const Json& o = section("overlap");
    c.overlap.enabled = o.value("enabled", c.overlap.enabled);
    c.overlap.max_word_perturb_fraction =
        o.value("max_word_perturb_fraction", c.overlap.max_word_perturb_fraction);
    c.overlap.max_levenshtein_per_word =
        o.value("max_levenshtein_per_word", c.overlap.max_levenshtein_per_word);
    const Json& p = section("pretransform");
    if (p.contains("protected_fields")) {
      for (const auto& f : p["protected_fields"]) {
        if (f.get<std::string>() != "options") {
          throw ConfigError("pretransform.protected_fields only accepts \"options\"");
        }
      }
      if (p["protected_fields"].empty()) {
        throw ConfigError("options protection cannot be disabled");
      }
    }
    c.pretransform.protected_tokens =
        p.value("protected_tokens", c.pretransform.protected_tokens);
    c.pretransform.protect_answer_markers =
        p.value("protect_answer_markers", c.pretransform.protect_answer_markers);
    const Json& sel = section("selective");
    c.selective.enabled = sel.value("enabled", c.selective.enabled);
    if (sel.contains("reference_mode")) {
      c.selective.reference_mode = parse_reference_mode(sel["reference_mode"].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("constraints: ") + e.what());
  }
  if (c.semantic.threshold < 0.0 || c.semantic.threshold > 1.0) {
    throw ConfigError("constraints.semantic.threshold must lie in [0, 1]");
  }
  if (!(c.overlap.max_word_perturb_fraction > 0.0 && c.overlap.max_word_perturb_fraction <= 1.0)) {
    throw ConfigError("constraints.overlap.max_word_perturb_fraction must lie in (0, 1]");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Semantic

struct SemanticVerdict {
  bool pass = true;
  double cosine = 1.0;
};

inline SemanticVerdict check_semantic(std::string_view original, std::string_view candidate,
                                      double threshold, SentenceEncoder& encoder) {
  const double c = original == candidate
                       ? 1.0
                       : cosine(encoder.encode(original), encoder.encode(candidate));
  return {c >= threshold, c};
}

// ---------------------------------------------------------------------------
// Grammatical

class PosTagger {
 public:
  virtual ~PosTagger() = default;
  virtual std::optional<std::string> tag(std::string_view word) const = 0;
};

// Word -> tag lookup. Unknown words have no tag.
class LexiconTagger final : public PosTagger {
 public:
  // A small closed-class core plus common content words.
  static LexiconTagger builtin() {
    LexiconTagger t;
    const std::pair<const char*, const char*> entries[] = {
        {"the", "DET"},      {"a", "DET"},        {"an", "DET"},        {"this", "DET"},
        {"that", "DET"},     {"these", "DET"},    {"those", "DET"},     {"which", "PRON"},
        {"what", "PRON"},    {"who", "PRON"},     {"it", "PRON"},       {"they", "PRON"},
        {"he", "PRON"},      {"she", "PRON"},     {"we", "PRON"},       {"you", "PRON"},
        {"of", "ADP"},       {"in", "ADP"},       {"on", "ADP"},        {"at", "ADP"},
        {"by", "ADP"},       {"for", "ADP"},      {"with", "ADP"},      {"from", "ADP"},
        {"to", "ADP"},       {"into", "ADP"},     {"and", "CONJ"},      {"or", "CONJ"},
        {"but", "CONJ"},     {"is", "VERB"},      {"are", "VERB"},      {"was", "VERB"},
        {"were", "VERB"},    {"be", "VERB"},      {"has", "VERB"},      {"have", "VERB"},
        {"does", "VERB"},    {"do", "VERB"},      {"run", "VERB"},      {"walk", "VERB"},
        {"find", "VERB"},    {"measure", "VERB"}, {"compute", "VERB"},  {"determine", "VERB"},
        {"blue", "ADJ"},     {"red", "ADJ"},      {"large", "ADJ"},     {"small", "ADJ"},
        {"big", "ADJ"},      {"high", "ADJ"},     {"low", "ADJ"},       {"correct", "ADJ"},
        {"cat", "NOUN"},     {"dog", "NOUN"},     {"height", "NOUN"},   {"altitude", "NOUN"},
        {"elevation", "NOUN"}, {"mass", "NOUN"},  {"speed", "NOUN"},    {"value", "NOUN"},
        {"answer", "NOUN"},  {"question", "NOUN"}, {"number", "NOUN"},  {"quickly", "ADV"},
        {"slowly", "ADV"},   {"not", "ADV"},
    };
    for (const auto& [w, tag] : entries) t.lexicon_[w] = tag;
    return t;
  }

  // One "word<TAB>TAG" line per entry, merged over `base`.
  static LexiconTagger load(const std::filesystem::path& file, LexiconTagger base = {}) {
    std::size_t line_no = 0;
    for (const auto& line : split(read_file(file), '\n')) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty() || t.starts_with('#')) continue;
      const auto tab = t.find('\t');
      if (tab == std::string_view::npos || tab == 0 || tab + 1 == t.size()) {
        throw ParseError(file.filename().string() + " line " + std::to_string(line_no) +
                         ": expected <word><TAB><tag>");
      }
      base.lexicon_[to_lower(t.substr(0, tab))] = std::string(trim(t.substr(tab + 1)));
    }
    return base;
  }

  void add(std::string_view word, std::string tag) { lexicon_[to_lower(word)] = std::move(tag); }

  std::optional<std::string> tag(std::string_view word) const override {
    const auto it = lexicon_.find(to_lower(word));
    if (it == lexicon_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, std::string> lexicon_;
};

struct GrammarVerdict {
  bool pass = true;
  // False for edit kinds the check does not apply to.
  bool applicable = false;
  // Set when either word is missing from the tagger; such edits pass.
  bool unknown_word = false;
  std::string original_tag;
  std::string replacement_tag;
};

inline GrammarVerdict check_grammatical(const Edit& edit, const PosTagger& tagger) {
  GrammarVerdict v;
  if (!is_word_substitution(edit.kind)) return v;
  v.applicable = true;
  const auto a = tagger.tag(edit.before);
  const auto b = tagger.tag(edit.after);
  if (!a || !b) {
    v.unknown_word = true;
    if (a) v.original_tag = *a;
    if (b) v.replacement_tag = *b;
    return v;
  }
  v.original_tag = *a;
  v.replacement_tag = *b;
  v.pass = *a == *b;
  return v;
}

// ---------------------------------------------------------------------------
// Overlap and non-redundancy

// Spans already rewritten by committed edits, in current-text coordinates.
class TouchedRegions {
 public:
  [[nodiscard]] bool overlaps(Field field, Span s) const {
    for (const auto& [f, r] : regions_) {
      if (f != field) continue;
      if (r.empty() && s.empty()) {
        if (r.begin == s.begin) return true;
      } else if (r.empty()) {
        if (s.begin < r.begin && r.begin < s.end) return true;
      } else if (s.empty()) {
        if (r.begin < s.begin && s.begin < r.end) return true;
      } else if (s.begin < r.end && r.begin < s.end) {
        return true;
      }
    }
    return false;
  }

  // Records `e` as applied; later regions of the same field shift with it.
  void commit(const Edit& e) {
    const std::ptrdiff_t delta =
        static_cast<std::ptrdiff_t>(e.after.size()) - static_cast<std::ptrdiff_t>(e.span.size());
    for (auto& [f, r] : regions_) {
      if (f != e.field || r.begin < e.span.end) continue;
      r.begin = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r.begin) + delta);
      r.end = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(r.end) + delta);
    }
    regions_.push_back({e.field, {e.span.begin, e.span.begin + e.after.size()}});
  }

  [[nodiscard]] std::size_t size() const { return regions_.size(); }

 private:
  std::vector<std::pair<Field, Span>> regions_;
};

struct OverlapLimits {
  double max_word_perturb_fraction = 0.2;
  // nullopt disables the per-word distance limit.
  std::optional<std::size_t> max_levenshtein_per_word = 2;
};

struct OverlapVerdict {
  bool pass = true;
  double fraction = 0.0;
  std::size_t changed_words = 0;
  std::size_t max_distance = 0;
  bool redundant = false;
};

// Compares the candidate against the original field text. When `edit` and
// `touched` are given, an edit landing on an already rewritten span fails.
inline OverlapVerdict check_overlap(std::string_view original, std::string_view candidate,
                                    const OverlapLimits& limits, const Edit* edit = nullptr,
                                    const TouchedRegions* touched = nullptr) {
  OverlapVerdict v;
  const auto a = words(original);
  const auto b = words(candidate);
  for (const auto& step : align_words(a, b)) {
    using Op = WordAlignment::Op;
    if (step.op == Op::kKeep) continue;
    ++v.changed_words;
    if (step.op == Op::kSubstitute) {
      v.max_distance = std::max(v.max_distance,
                                damerau_levenshtein(a[step.original_index], b[step.edited_index]));
    }
  }
  v.fraction = a.empty() ? (v.changed_words ? 1.0 : 0.0)
                         : static_cast<double>(v.changed_words) / static_cast<double>(a.size());
  if (edit && touched) v.redundant = touched->overlaps(edit->field, edit->span);
  v.pass = v.fraction <= limits.max_word_perturb_fraction + 1e-12 && !v.redundant &&
           (!limits.max_levenshtein_per_word || v.max_distance <= *limits.max_levenshtein_per_word);
  return v;
}

inline OverlapLimits overlap_limits_for(const OverlapConstraint& c, EditKind kind) {
  OverlapLimits l;
  l.max_word_perturb_fraction = c.max_word_perturb_fraction;
  l.max_levenshtein_per_word =
      is_char_edit(kind) ? std::optional(c.max_levenshtein_per_word) : std::nullopt;
  return l;
}

// ---------------------------------------------------------------------------
// Pre-transformation

struct EditableToken {
  Field field;
  Span span;
  // Position among the word tokens of its field.
  std::size_t token_index;
};

inline std::vector<std::string> load_protected_tokens(const std::filesystem::path& file) {
  std::vector<std::string> out;
  for (const auto& line : split(read_file(file), '\n')) {
    const auto t = trim(line);
    if (!t.empty() && !t.starts_with('#')) out.emplace_back(t);
  }
  return out;
}

namespace detail {

// True when `pattern` covers the word at `s`, including any punctuation the
// pattern carries around the word ("Answer:" needs a trailing colon).
inline bool token_matches(std::string_view text, Span s, std::string_view pattern) {
  const auto core = word_spans(pattern);
  if (core.size() != 1) return false;
  const auto c = core[0];
  if (!iequals(text.substr(s.begin, s.size()), pattern.substr(c.begin, c.size()))) return false;
  const auto prefix = pattern.substr(0, c.begin);
  const auto suffix = pattern.substr(c.end);
  if (prefix.size() > s.begin || text.substr(s.begin - prefix.size(), prefix.size()) != prefix) {
    return false;
  }
  return text.substr(s.end, suffix.size()) == suffix;
}

}  // namespace detail

// Word tokens of the question and (non-empty) system instruction that may be
// edited. Option text is never part of the result.
inline std::vector<EditableToken> editable_mask(const PerturbedItem& item,
                                                const PretransformConstraint& c) {
  std::vector<std::string> patterns = c.protected_tokens;
  if (c.protect_answer_markers) {
    patterns.push_back("Answer:");
    patterns.push_back("Options:");
  }
  std::vector<EditableToken> out;
  for (Field f : {Field::kQuestion, Field::kSystemInstruction}) {
    const std::string_view text = field_text(item, f);
    const auto spans = word_spans(text);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      const bool blocked = std::any_of(patterns.begin(), patterns.end(), [&](const auto& p) {
        return detail::token_matches(text, spans[i], p);
      });
      if (!blocked) out.push_back({f, spans[i], i});
    }
  }
  return out;
}

inline std::vector<EditableToken> editable_mask(const BenchmarkItem& item,
                                                const PretransformConstraint& c) {
  return editable_mask(identity_perturbation(item), c);
}

// ---------------------------------------------------------------------------
// Selective

enum class SelectiveDirection { kDegrade, kImprove };

struct SelectiveVerdict {
  bool pass = false;
  Verdict target;
  std::vector<Verdict> references;
};

// Baseline verdicts keyed by model name.
using VerdictMap = std::map<std::string, Verdict>;

inline bool reference_preserved(const Verdict& now, const Verdict& baseline, ReferenceMode mode) {
  if (mode == ReferenceMode::kPreserveCorrect) return now.correct;
  return now.letter == baseline.letter;
}

inline bool target_goal_met(const Verdict& v, SelectiveDirection d) {
  return d == SelectiveDirection::kDegrade ? !v.correct : v.correct;
}

// Decides from verdicts already computed on the candidate.
inline bool selective_pass(const Verdict& target, const std::vector<Verdict>& references,
                           const VerdictMap& baseline, ReferenceMode mode,
                           SelectiveDirection direction) {
  if (!target_goal_met(target, direction)) return false;
  for (const auto& r : references) {
    const auto it = baseline.find(r.model);
    if (it == baseline.end()) {
      throw ValidationError("no baseline verdict for reference '" + r.model + "'");
    }
    if (!reference_preserved(r, it->second, mode)) return false;
  }
  return true;
}

// Evaluates the candidate on the target (unless `target_verdict` is supplied)
// and on every reference. Oracle errors propagate.
inline SelectiveVerdict check_selective(const BenchmarkItem& item, const PerturbedItem& candidate,
                                        Evaluator& target,
                                        const std::vector<Evaluator*>& references,
                                        const VerdictMap& baseline, ReferenceMode mode,
                                        SelectiveDirection direction = SelectiveDirection::kDegrade,
                                        const std::optional<Verdict>& target_verdict = {}) {
  SelectiveVerdict v;
  v.target = target_verdict ? *target_verdict : target.evaluate(item, candidate);
  for (Evaluator* r : references) v.references.push_back(r->evaluate(item, candidate));
  v.pass = selective_pass(v.target, v.references, baseline, mode, direction);
  return v;
}

// ---------------------------------------------------------------------------
// Per-candidate log

struct ConstraintVerdictLog {
  std::optional<SemanticVerdict> semantic;
  std::optional<GrammarVerdict> grammatical;
  std::optional<OverlapVerdict> overlap;
  std::optional<SelectiveVerdict> selective;

  // Conjunction of every check that ran.
  [[nodiscard]] bool admissible() const {
    return (!semantic || semantic->pass) && (!grammatical || grammatical->pass) &&
           (!overlap || overlap->pass) && (!selective || selective->pass);
  }
};

inline Json constraint_log_to_json(const ConstraintVerdictLog& log) {
  Json j = Json::object();
  if (log.semantic) j["semantic"] = {{"pass", log.semantic->pass}, {"cosine", log.semantic->cosine}};
  if (log.grammatical) {
    j["grammatical"] = {{"pass", log.grammatical->pass},
                        {"applicable", log.grammatical->applicable},
                        {"unknown_word", log.grammatical->unknown_word},
                        {"original_tag", log.grammatical->original_tag},
                        {"replacement_tag", log.grammatical->replacement_tag}};
  }
  if (log.overlap) {
    j["overlap"] = {{"pass", log.overlap->pass},
                    {"fraction", log.overlap->fraction},
                    {"changed_words", log.overlap->changed_words},
                    {"max_distance", log.overlap->max_distance},
                    {"redundant", log.overlap->redundant}};
  }
  if (log.selective) {
    Json refs = Json::array();
    for (const auto& r : log.selective->references) refs.push_back(verdict_to_json(r));
    j["selective"] = {{"pass", log.selective->pass},
                      {"target", verdict_to_json(log.selective->target)},
                      {"references", refs}};
  }
  j["admissible"] = log.admissible();
  return j;
}

// Runs the enabled cheap checks against the original field text. Stops at the
// first failure so that encoder calls are not wasted.
struct CheapCheckContext {
  const ConstraintSet* constraints = nullptr;
  SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
  const TouchedRegions* touched = nullptr;
};

inline ConstraintVerdictLog check_cheap(std::string_view original_field,
                                        const CandidatePerturbation& cand,
                                        const CheapCheckContext& ctx) {
  const ConstraintSet& c = *ctx.constraints;
  ConstraintVerdictLog log;
  if (c.grammatical.enabled && ctx.tagger) {
    log.grammatical = check_grammatical(cand.edit, *ctx.tagger);
    if (!log.grammatical->pass) return log;
  }
  if (c.overlap.enabled) {
    log.overlap = check_overlap(original_field, cand.text, overlap_limits_for(c.overlap, cand.edit.kind),
                                &cand.edit, ctx.touched);
    if (!log.overlap->pass) return log;
  } else if (ctx.touched && ctx.touched->overlaps(cand.edit.field, cand.edit.span)) {
    // Non-redundancy holds even with the size limits switched off.
    log.overlap = OverlapVerdict{false, 0.0, 0, 0, true};
    return log;
  }
  if (c.semantic.enabled) {
    if (!ctx.encoder) throw ConfigError("semantic constraint enabled without an encoder");
    log.semantic = check_semantic(original_field, cand.text, c.semantic.threshold, *ctx.encoder);
  }
  return log;
}

}  // namespace selattack
