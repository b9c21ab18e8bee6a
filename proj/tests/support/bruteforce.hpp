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


// Randomized small attack instances and an exhaustive-search oracle that
// enumerates every combination of per-token substitutions.

#pragma once

#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "selattack/constraint.hpp"
#include "selattack/mock.hpp"
#include "selattack/search.hpp"
#include "testing.hpp"

namespace selattack::testing {

// Scores the wrong letter (gold + 1) by the summed weights of the words in the
// prompt; the gold letter gets a fixed 2.0.
class WeightedWordModel final : public AnswerModel {
 public:
  explicit WeightedWordModel(std::map<std::string, double> weights) : weights_(std::move(weights)) {}

  std::vector<double> option_logits(const RenderedPrompt& prompt, const ItemContext& ctx) override {
    double pull = 0.0;
    for (const auto& w : words(prompt.user)) {
      const auto it = weights_.find(to_lower(w));
      if (it != weights_.end()) pull += it->second;
    }
    std::vector<double> logits(ctx.n_options, 0.0);
    logits[ctx.gold] = 2.0;
    logits[(ctx.gold + 1) % ctx.n_options] = pull;
    return logits;
  }
  std::string complete(const RenderedPrompt& prompt, const ItemContext& ctx) override {
    const auto l = option_logits(prompt, ctx);
    return std::string(1, option_letter(argmax(l)));
  }
  [[nodiscard]] bool reads_context() const override { return true; }

 private:
  std::map<std::string, double> weights_;
};

// Mask filler backed by an in-memory word -> fills table.
class TableFiller final : public MaskFiller {
 public:
  explicit TableFiller(std::map<std::string, std::vector<std::string>> table) : table_(std::move(table)) {}
  std::vector<MaskFill> fill(const MaskRequest& request) override {
    std::vector<MaskFill> out;
    const auto it = table_.find(to_lower(request.original_word));
    if (it == table_.end()) return out;
    for (std::size_t i = 0; i < it->second.size() && i < request.top_k; ++i) {
      out.push_back({it->second[i], 1.0 - 0.05 * static_cast<double>(i)});
    }
    return out;
  }

 private:
  std::map<std::string, std::vector<std::string>> table_;
};

// One item plus everything needed to search its perturbations.
struct SearchSpace {
  const BenchmarkItem* item = nullptr;
  Evaluator* target = nullptr;
  std::vector<Evaluator*> references;
  CandidateSource* source = nullptr;
  const ConstraintSet* constraints = nullptr;
  SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
};

struct RandomInstance {
  BenchmarkItem item;
  std::unique_ptr<Evaluator> target;
  std::vector<std::unique_ptr<Evaluator>> references;
  std::shared_ptr<MaskFiller> filler;
  std::unique_ptr<MaskFillSource> source;
  ConstraintSet constraints;
  std::unique_ptr<BagOfWordsEncoder> encoder;
  LexiconTagger tagger = LexiconTagger::builtin();
  std::size_t budget = 0;
  std::size_t space = 1;

  [[nodiscard]] AttackContext context() const {
    AttackContext ctx;
    ctx.target = target.get();
    for (const auto& r : references) ctx.references.push_back(r.get());
    ctx.source = source.get();
    ctx.constraints = &constraints;
    ctx.encoder = encoder.get();
    ctx.tagger = &tagger;
    ctx.budget = budget;
    return ctx;
  }

  [[nodiscard]] SearchSpace search_space() const {
    SearchSpace sp;
    sp.item = &item;
    sp.target = target.get();
    for (const auto& r : references) sp.references.push_back(r.get());
    sp.source = source.get();
    sp.constraints = &constraints;
    sp.encoder = encoder.get();
    sp.tagger = &tagger;
    return sp;
  }

  [[nodiscard]] VerdictMap baseline() const {
    VerdictMap m;
    m[target->name()] = target->evaluate(item);
    for (const auto& r : references) m[r->name()] = r->evaluate(item);
    return m;
  }
};

inline const std::vector<std::string>& instance_vocabulary() {
  static const std::vector<std::string> v{"cat",  "dog",   "height", "altitude", "elevation", "mass",
                                          "speed", "value", "blue",  "red",      "large",     "small",
                                          "big",  "high",  "low",    "run",      "walk",      "find",
                                          "zorb", "quill", "fennel"};
  return v;
}

// Draws an instance whose candidate space (product over tokens of one plus
// the number of substitutes) is at most `max_space`.
inline std::unique_ptr<RandomInstance> random_instance(std::mt19937_64& rng, std::size_t max_space = 64) {
  const auto& vocab = instance_vocabulary();
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  auto inst = std::make_unique<RandomInstance>();
  std::vector<std::string> qwords;
  std::map<std::string, std::vector<std::string>> table;
  for (;;) {
    qwords.clear();
    table.clear();
    const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 6)(rng);
    for (std::size_t i = 0; i < n; ++i) qwords.push_back(vocab[pick(rng)]);
    for (const auto& w : qwords) {
      if (table.count(w)) continue;
      auto& fills = table[w];
      const std::size_t k = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
      for (std::size_t i = 0; i < k; ++i) {
        const auto& f = vocab[pick(rng)];
        if (f != w && std::find(fills.begin(), fills.end(), f) == fills.end()) fills.push_back(f);
      }
    }
    std::size_t space = 1;
    for (const auto& w : qwords) space *= 1 + table[w].size();
    if (space <= max_space) {
      inst->space = space;
      break;
    }
  }
  std::string q;
  for (const auto& w : qwords) q += (q.empty() ? "" : " ") + w;
  q += "?";
  const std::size_t gold = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
  inst->item = make_item("rnd", q, {"alpha", "beta", "gamma", "delta"}, gold);

  const double steps[] = {0.0, 0.0, 0.5, 1.0, 1.5, 2.5};
  auto weights = [&] {
    std::map<std::string, double> w;
    for (const auto& v : vocab) w[v] = steps[std::uniform_int_distribution<std::size_t>(0, 5)(rng)];
    return w;
  };
  // Original words mostly carry no pull so the target usually starts correct.
  auto target_weights = weights();
  for (const auto& w : qwords) {
    if (std::bernoulli_distribution(0.7)(rng)) target_weights[w] = 0.0;
  }
  inst->target = std::make_unique<Evaluator>("target", std::make_shared<WeightedWordModel>(target_weights),
                                             ScoreMode::kLogprob, PromptTemplate{});
  const std::size_t nrefs = std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  for (std::size_t r = 0; r < nrefs; ++r) {
    inst->references.push_back(std::make_unique<Evaluator>(
        "ref" + std::to_string(r), std::make_shared<WeightedWordModel>(weights()), ScoreMode::kLogprob,
        PromptTemplate{}));
  }
  inst->filler = std::make_shared<TableFiller>(table);
  inst->source = std::make_unique<MaskFillSource>(inst->filler, 8);
  const double fractions[] = {0.25, 0.34, 0.5, 1.0};
  const double thetas[] = {0.0, 0.3, 0.6};
  inst->constraints.overlap.max_word_perturb_fraction = fractions[std::uniform_int_distribution<int>(0, 3)(rng)];
  inst->constraints.semantic.threshold = thetas[std::uniform_int_distribution<int>(0, 2)(rng)];
  inst->constraints.selective.reference_mode = std::bernoulli_distribution(0.5)(rng)
                                                   ? ReferenceMode::kPreserveCorrect
                                                   : ReferenceMode::kPreserveResponse;
  inst->encoder = std::make_unique<BagOfWordsEncoder>();
  inst->budget = std::bernoulli_distribution(0.2)(rng) ? 6 : 10000;
  return inst;
}

struct ExhaustiveResult {
  std::size_t enumerated = 0;
  // Question texts of every admissible state where the goal holds.
  std::set<std::string> successes;
  // Set when the space holds edits this oracle does not model.
  std::string unsupported;
};

// True when the whole-field constraints hold between `original` and `text`.
inline bool field_admissible(const SearchSpace& sp, EditKind kind, const std::string& original,
                             const std::string& text) {
  const auto& c = *sp.constraints;
  if (c.overlap.enabled && !check_overlap(original, text, overlap_limits_for(c.overlap, kind)).pass) {
    return false;
  }
  if (c.semantic.enabled && !check_semantic(original, text, c.semantic.threshold, *sp.encoder).pass) {
    return false;
  }
  return true;
}

inline VerdictMap baseline_of(const SearchSpace& sp) {
  VerdictMap m;
  m[sp.target->name()] = sp.target->evaluate(*sp.item);
  for (auto* r : sp.references) m[r->name()] = r->evaluate(*sp.item);
  return m;
}

inline bool goal_holds(const SearchSpace& sp, const VerdictMap& baseline, const PerturbedItem& p) {
  if (sp.target->evaluate(*sp.item, p).correct) return false;
  if (!sp.constraints->selective.enabled) return true;
  for (auto* r : sp.references) {
    if (!reference_preserved(r->evaluate(*sp.item, p), baseline.at(r->name()),
                             sp.constraints->selective.reference_mode)) {
      return false;
    }
  }
  return true;
}

// Enumerates every assignment of "keep" or one candidate to each editable
// question token. Candidates must replace exactly their token.
inline ExhaustiveResult exhaustive_search(const SearchSpace& sp) {
  ExhaustiveResult out;
  const VerdictMap baseline = baseline_of(sp);
  const std::string& original = sp.item->question;
  std::vector<Span> spans;
  std::vector<std::vector<CandidatePerturbation>> options;
  for (const auto& t : editable_mask(*sp.item, sp.constraints->pretransform)) {
    if (t.field != Field::kQuestion) {
      out.unsupported = "system instruction tokens";
      return out;
    }
    auto cands = sp.source->generate(sp.item->id, Field::kQuestion, original, t.span);
    for (const auto& c : cands) {
      if (c.edit.span != t.span) {
        out.unsupported = "edit wider than its token";
        return out;
      }
    }
    spans.push_back(t.span);
    options.push_back(std::move(cands));
  }
  std::vector<std::size_t> choice(spans.size(), 0);
  for (;;) {
    std::string text;
    std::size_t at = 0;
    bool grammatical = true;
    EditKind kind = EditKind::kWordMaskfillSub;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      text.append(original, at, spans[i].begin - at);
      if (choice[i] == 0) {
        text.append(original, spans[i].begin, spans[i].size());
      } else {
        const auto& c = options[i][choice[i] - 1];
        if (sp.constraints->grammatical.enabled && sp.tagger && !check_grammatical(c.edit, *sp.tagger).pass) {
          grammatical = false;
        }
        kind = c.edit.kind;
        text += c.edit.after;
      }
      at = spans[i].end;
    }
    text.append(original, at);
    ++out.enumerated;
    if (grammatical && field_admissible(sp, kind, original, text)) {
      PerturbedItem p = identity_perturbation(*sp.item);
      p.question = text;
      if (goal_holds(sp, baseline, p)) out.successes.insert(text);
    }
    std::size_t i = 0;
    for (; i < choice.size(); ++i) {
      if (++choice[i] <= options[i].size()) break;
      choice[i] = 0;
    }
    if (i == choice.size()) break;
  }
  return out;
}

// Replays a greedy success: the edit log rebuilds the text, the options are
// untouched, the constraints hold on the whole field and the goal is met.
inline std::string replay_success(const SearchSpace& sp, const VerdictMap& baseline, const PerturbedItem& p,
                                  const ExhaustiveResult& ex) {
  if (!ex.successes.count(p.question)) return "greedy result '" + p.question + "' is not an exhaustive success";
  PerturbedItem rebuilt = identity_perturbation(*sp.item);
  for (const auto& e : p.edit_log) commit_edit(rebuilt, e);
  if (rebuilt.question != p.question) return "edit log does not replay";
  const auto opts = render_options(*sp.item);
  if (render_prompt(*sp.item, &p, PromptTemplate{}).user.find(opts) == std::string::npos) {
    return "options block changed";
  }
  const EditKind kind = p.edit_log.empty() ? EditKind::kWordMaskfillSub : p.edit_log.back().kind;
  if (!field_admissible(sp, kind, sp.item->question, p.question)) return "replayed text violates constraints";
  if (!goal_holds(sp, baseline, p)) return "replayed text does not meet the goal";
  return {};
}

// Checks one instance. Returns an empty string when greedy success implies an
// exhaustive success and the greedy result replays cleanly.
inline std::string check_greedy_against_exhaustive(const RandomInstance& inst, bool* greedy_succeeded = nullptr) {
  const SearchSpace sp = inst.search_space();
  const VerdictMap baseline = inst.baseline();
  const AttackResult res = greedy_attack(inst.item, baseline, inst.context());
  const ExhaustiveResult ex = exhaustive_search(sp);
  if (!ex.unsupported.empty()) return "unsupported space: " + ex.unsupported;
  if (ex.enumerated != inst.space) return "enumerated " + std::to_string(ex.enumerated) + " of " +
                                          std::to_string(inst.space);
  if (greedy_succeeded) *greedy_succeeded = res.status == AttackStatus::kSuccess;
  if (res.status != AttackStatus::kSuccess) {
    if (res.best_candidate) return "best_candidate set without success";
    return {};
  }
  if (!res.best_candidate) return "success without a candidate";
  if (ex.successes.empty()) return "greedy succeeded but exhaustive search found nothing for '" + inst.item.question + "'";
  return replay_success(sp, baseline, *res.best_candidate, ex);
}

}  // namespace selattack::testing
