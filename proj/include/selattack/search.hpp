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

// Goal functions, word-importance ordering and the greedy attack loop, plus
// the per-benchmark experiment driver.

#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/cache.hpp"
#include "selattack/constraint.hpp"
#include "selattack/oracle.hpp"
#include "selattack/selectivity.hpp"
#include "selattack/transform.hpp"

namespace selattack {

enum class GoalKind { kUntargeted, kSelectiveUntargeted, kSelectiveImprove };

inline std::string_view to_string(GoalKind g) {
  switch (g) {
    case GoalKind::kUntargeted: return "untargeted";
    case GoalKind::kSelectiveUntargeted: return "selective-untargeted";
    case GoalKind::kSelectiveImprove: return "selective-improve";
  }
  return "?";
}

inline GoalKind parse_goal(std::string_view s) {
  for (auto g : {GoalKind::kUntargeted, GoalKind::kSelectiveUntargeted, GoalKind::kSelectiveImprove}) {
    if (to_string(g) == s) return g;
  }
  throw ConfigError("unknown goal '" + std::string(s) +
                    "' (untargeted, selective-untargeted, selective-improve)");
}

inline bool is_selective(GoalKind g) { return g != GoalKind::kUntargeted; }

inline SelectiveDirection direction_of(GoalKind g) {
  return g == GoalKind::kSelectiveImprove ? SelectiveDirection::kImprove
                                          : SelectiveDirection::kDegrade;
}

// 1 - p(gold) for the degrading goals, p(gold) for selective-improve.
inline double goal_score(const std::vector<double>& probs, std::size_t gold, GoalKind kind) {
  const double p = gold < probs.size() ? probs[gold] : 0.0;
  const double s = kind == GoalKind::kSelectiveImprove ? p : 1.0 - p;
  return std::clamp(s, 0.0, 1.0);
}

inline double goal_score(const OptionDistribution& d, std::size_t gold, GoalKind kind) {
  return goal_score(d.probs, gold, kind);
}

inline double goal_score(const Verdict& v, const BenchmarkItem& item, GoalKind kind) {
  return goal_score(verdict_probs(v, item.options.size()), item.gold, kind);
}

// Target-side success; the selective goals add check_selective on top.
inline bool goal_success(const Verdict& v, GoalKind kind) {
  return target_goal_met(v, direction_of(kind));
}

enum class Recipe { kChar, kEmbed, kMaskfill, kReduction };

inline std::string_view to_string(Recipe r) {
  switch (r) {
    case Recipe::kChar: return "char";
    case Recipe::kEmbed: return "embed";
    case Recipe::kMaskfill: return "maskfill";
    case Recipe::kReduction: return "reduction";
  }
  return "?";
}

inline Recipe parse_recipe(std::string_view s) {
  for (auto r : {Recipe::kChar, Recipe::kEmbed, Recipe::kMaskfill, Recipe::kReduction}) {
    if (to_string(r) == s) return r;
  }
  throw ConfigError("unknown recipe '" + std::string(s) + "' (char, embed, maskfill, reduction)");
}

enum class AttackStatus { kSuccess, kExhausted, kBudgetExceeded, kNotAttacked, kQuarantined };

inline std::string_view to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::kSuccess: return "success";
    case AttackStatus::kExhausted: return "exhausted";
    case AttackStatus::kBudgetExceeded: return "budget-exceeded";
    case AttackStatus::kNotAttacked: return "not-attacked";
    case AttackStatus::kQuarantined: return "quarantined";
  }
  return "?";
}

inline AttackStatus parse_attack_status(std::string_view s) {
  for (auto x : {AttackStatus::kSuccess, AttackStatus::kExhausted, AttackStatus::kBudgetExceeded,
                 AttackStatus::kNotAttacked, AttackStatus::kQuarantined}) {
    if (to_string(x) == s) return x;
  }
  throw ParseError("unknown attack status '" + std::string(s) + "'");
}

struct TraceEntry {
  // Position of the token in the saliency order.
  std::size_t step = 0;
  Field field = Field::kQuestion;
  std::size_t token_index = 0;
  CandidatePerturbation candidate;
  std::optional<double> score;
  ConstraintVerdictLog constraints;
  // inadmissible, not-improving, improving, committed, selective-fail,
  // success or over-budget.
  std::string outcome;
};

struct AttackResult {
  AttackStatus status = AttackStatus::kExhausted;
  // The successful perturbation; empty unless status is success.
  std::optional<PerturbedItem> best_candidate;
  // Text after the last committed edit, successful or not.
  PerturbedItem final_state;
  double initial_score = 0.0;
  double final_score = 0.0;
  std::size_t queries_used = 0;
  std::vector<TraceEntry> trace;
  std::optional<SelectiveVerdict> selective;
};

// Everything a single attack needs. Pointers are borrowed.
struct AttackContext {
  Evaluator* target = nullptr;
  std::vector<Evaluator*> references;
  CandidateSource* source = nullptr;
  const ConstraintSet* constraints = nullptr;
  SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
  GoalKind goal = GoalKind::kSelectiveUntargeted;
  std::size_t budget = 512;
};

namespace detail {

struct QueryBudget {
  std::size_t limit;
  std::size_t used = 0;
  bool take(std::size_t n) {
    if (used + n > limit) return false;
    used += n;
    return true;
  }
};

struct BudgetExhausted {};

}  // namespace detail

struct TokenSaliency {
  EditableToken token;
  double saliency = 0.0;
};

namespace detail {

inline std::vector<TokenSaliency> saliency_impl(const BenchmarkItem& item,
                                                const PerturbedItem& current,
                                                const std::vector<EditableToken>& tokens,
                                                Evaluator& target, GoalKind goal,
                                                double base_score, QueryBudget* budget) {
  std::vector<TokenSaliency> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto del = word_deletion_at(item.id, t.field, field_text(current, t.field), t.span);
    double s = 0.0;
    if (del) {
      if (budget && !budget->take(1)) throw BudgetExhausted{};
      PerturbedItem p = current;
      commit_edit(p, del->edit);
      s = goal_score(target.evaluate(item, p), item, goal) - base_score;
    }
    out.push_back({t, s});
  }
  std::stable_sort(out.begin(), out.end(), [](const TokenSaliency& a, const TokenSaliency& b) {
    return a.saliency > b.saliency;
  });
  return out;
}

}  // namespace detail

// Editable tokens ranked by how much deleting each one raises the goal score.
// Ties keep token order.
inline std::vector<TokenSaliency> token_saliency(const BenchmarkItem& item, Evaluator& target,
                                                 GoalKind goal,
                                                 const PretransformConstraint& pretransform = {}) {
  const PerturbedItem current = identity_perturbation(item);
  const double base = goal_score(target.evaluate(item, current), item, goal);
  return detail::saliency_impl(item, current, editable_mask(current, pretransform), target, goal,
                               base, nullptr);
}

// True when the target's baseline verdict leaves room for the goal: correct
// for the degrading goals, incorrect for selective-improve.
inline bool attackable(const Verdict& target_baseline, GoalKind goal) {
  return !goal_success(target_baseline, goal);
}

inline AttackResult greedy_attack(const BenchmarkItem& item, const VerdictMap& baseline,
                                  const AttackContext& ctx) {
  AttackResult result;
  const PerturbedItem original = identity_perturbation(item);
  result.final_state = original;
  const auto tb = baseline.find(ctx.target->name());
  if (tb == baseline.end()) throw ValidationError("no baseline verdict for the target");
  if (!attackable(tb->second, ctx.goal)) {
    result.status = AttackStatus::kNotAttacked;
    return result;
  }

  detail::QueryBudget budget{ctx.budget};
  PerturbedItem current = original;
  double current_score = goal_score(tb->second, item, ctx.goal);
  result.initial_score = current_score;
  result.final_score = current_score;
  const bool selective = is_selective(ctx.goal) && ctx.constraints->selective.enabled;

  auto finish = [&](AttackStatus status) {
    result.status = status;
    result.final_state = current;
    result.final_score = current_score;
    result.queries_used = budget.used;
    if (status == AttackStatus::kSuccess) result.best_candidate = current;
    return result;
  };

  std::vector<TokenSaliency> order;
  try {
    order = detail::saliency_impl(item, current, editable_mask(current, ctx.constraints->pretransform),
                                  *ctx.target, ctx.goal, current_score, &budget);
  } catch (const detail::BudgetExhausted&) {
    return finish(AttackStatus::kBudgetExceeded);
  }

  struct Slot {
    EditableToken token;
    bool consumed = false;
  };
  std::vector<Slot> slots;
  for (const auto& o : order) slots.push_back({o.token});

  TouchedRegions touched;
  const CheapCheckContext cheap{ctx.constraints, ctx.encoder, ctx.tagger, &touched};

  struct Scored {
    std::size_t trace_index;
    PerturbedItem item;
    Verdict verdict;
    double score;
  };

  for (std::size_t step = 0; step < slots.size(); ++step) {
    Slot& slot = slots[step];
    if (slot.consumed) continue;
    const Field field = slot.token.field;
    const std::string text(field_text(current, field));
    const std::string_view original_text = field_text(original, field);
    auto candidates = ctx.source->generate(item.id, field, text, slot.token.span);

    std::vector<Scored> scored;
    for (auto& cand : candidates) {
      TraceEntry entry;
      entry.step = step;
      entry.field = field;
      entry.token_index = slot.token.token_index;
      entry.constraints = check_cheap(original_text, cand, cheap);
      entry.candidate = std::move(cand);
      if (!entry.constraints.admissible()) {
        entry.outcome = "inadmissible";
        result.trace.push_back(std::move(entry));
        continue;
      }
      if (!budget.take(1)) {
        entry.outcome = "over-budget";
        result.trace.push_back(std::move(entry));
        return finish(AttackStatus::kBudgetExceeded);
      }
      PerturbedItem p = current;
      commit_edit(p, entry.candidate.edit);
      Verdict v = ctx.target->evaluate(item, p);
      const double s = goal_score(v, item, ctx.goal);
      entry.score = s;
      entry.outcome = s > current_score ? "improving" : "not-improving";
      result.trace.push_back(std::move(entry));
      if (s > current_score) scored.push_back({result.trace.size() - 1, std::move(p), std::move(v), s});
    }
    if (scored.empty()) continue;

    std::stable_sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return result.trace[a.trace_index].candidate.text < result.trace[b.trace_index].candidate.text;
    });

    auto commit = [&](Scored& s, const char* outcome) {
      TraceEntry& entry = result.trace[s.trace_index];
      entry.outcome = outcome;
      const Edit& e = entry.candidate.edit;
      for (auto& other : slots) {
        if (other.consumed || other.token.field != e.field) continue;
        const Span sp = other.token.span;
        if (sp.begin >= e.span.end) {
          const std::ptrdiff_t delta = static_cast<std::ptrdiff_t>(e.after.size()) -
                                       static_cast<std::ptrdiff_t>(e.span.size());
          other.token.span = {static_cast<std::size_t>(static_cast<std::ptrdiff_t>(sp.begin) + delta),
                              static_cast<std::size_t>(static_cast<std::ptrdiff_t>(sp.end) + delta)};
        } else if (sp.end > e.span.begin) {
          other.consumed = true;
        }
      }
      slot.consumed = true;
      touched.commit(e);
      current = std::move(s.item);
      current_score = s.score;
    };

    for (auto& s : scored) {
      if (!goal_success(s.verdict, ctx.goal)) continue;
      if (selective) {
        if (!budget.take(ctx.references.size())) return finish(AttackStatus::kBudgetExceeded);
        auto sv = check_selective(item, s.item, *ctx.target, ctx.references, baseline,
                                  ctx.constraints->selective.reference_mode,
                                  direction_of(ctx.goal), s.verdict);
        result.trace[s.trace_index].constraints.selective = sv;
        if (!sv.pass) {
          result.trace[s.trace_index].outcome = "selective-fail";
          continue;
        }
        result.selective = std::move(sv);
      }
      commit(s, "success");
      return finish(AttackStatus::kSuccess);
    }
    for (auto& s : scored) {
      if (goal_success(s.verdict, ctx.goal)) continue;
      commit(s, "committed");
      break;
    }
  }
  return finish(AttackStatus::kExhausted);
}

// ---------------------------------------------------------------------------
// Records and serialization

inline Json candidate_to_json(const CandidatePerturbation& c) {
  return {{"base_id", c.base_id},
          {"edit", edit_to_json(c.edit)},
          {"text", c.text},
          {"null_edit", c.null_edit},
          {"provenance", c.provenance}};
}

inline Json trace_entry_to_json(const TraceEntry& t) {
  Json j;
  j["step"] = t.step;
  j["field"] = to_string(t.field);
  j["token_index"] = t.token_index;
  j["candidate"] = candidate_to_json(t.candidate);
  j["score"] = t.score ? Json(*t.score) : Json(nullptr);
  j["constraints"] = constraint_log_to_json(t.constraints);
  j["outcome"] = t.outcome;
  return j;
}

struct AttackRecord {
  std::string item_id;
  AttackStatus status = AttackStatus::kNotAttacked;
  std::string target;
  std::vector<std::string> references;
  VerdictMap baseline;
  // Verdicts on the final text: the successful perturbation, else the original.
  VerdictMap final_verdicts;
  std::optional<PerturbedItem> perturbed;
  std::size_t queries_used = 0;
  std::vector<TraceEntry> trace;
  std::string quarantine_reason;
};

inline Json verdict_map_to_json(const VerdictMap& m) {
  Json j = Json::object();
  for (const auto& [name, v] : m) j[name] = verdict_to_json(v);
  return j;
}

inline VerdictMap verdict_map_from_json(const Json& j) {
  VerdictMap m;
  for (const auto& [name, v] : j.items()) m[name] = verdict_from_json(v);
  return m;
}

// The trace is written separately (see --trace); records stay compact.
inline Json record_to_json(const AttackRecord& r) {
  Json j;
  j["item_id"] = r.item_id;
  j["status"] = to_string(r.status);
  j["target"] = r.target;
  j["references"] = r.references;
  j["baseline"] = verdict_map_to_json(r.baseline);
  j["final"] = verdict_map_to_json(r.final_verdicts);
  j["perturbed"] = r.perturbed ? perturbed_to_json(*r.perturbed) : Json(nullptr);
  j["queries_used"] = r.queries_used;
  j["trace_length"] = r.trace.size();
  if (!r.quarantine_reason.empty()) j["quarantine_reason"] = r.quarantine_reason;
  return j;
}

inline AttackRecord record_from_json(const Json& j) {
  AttackRecord r;
  try {
    r.item_id = j.at("item_id").get<std::string>();
    r.status = parse_attack_status(j.at("status").get<std::string>());
    r.target = j.at("target").get<std::string>();
    r.references = j.at("references").get<std::vector<std::string>>();
    r.baseline = verdict_map_from_json(j.at("baseline"));
    r.final_verdicts = verdict_map_from_json(j.at("final"));
    if (!j.at("perturbed").is_null()) r.perturbed = perturbed_from_json(j["perturbed"]);
    r.queries_used = j.value("queries_used", std::size_t{0});
    r.quarantine_reason = j.value("quarantine_reason", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("attack record: ") + e.what());
  }
  return r;
}

inline std::vector<AttackRecord> read_records(const std::filesystem::path& path) {
  std::vector<AttackRecord> out;
  for_each_json_line(read_file(path), path.filename().string(),
                     [&](const Json& j, std::size_t) { out.push_back(record_from_json(j)); });
  return out;
}

// Accuracy before and after over every non-quarantined record.
inline EvaluationSummary summarize_records(const std::vector<AttackRecord>& records,
                                           const std::string& target,
                                           const std::vector<std::string>& references,
                                           std::string label = "") {
  EvaluationSummary s;
  s.label = std::move(label);
  s.target = target;
  s.models.push_back({target, "target"});
  for (const auto& r : references) s.models.push_back({r, "reference"});
  for (const auto& rec : records) {
    if (rec.status == AttackStatus::kQuarantined) {
      ++s.quarantined;
      continue;
    }
    ++s.item_count;
    for (auto& m : s.models) {
      const auto b = rec.baseline.find(m.name);
      const auto f = rec.final_verdicts.find(m.name);
      if (b == rec.baseline.end() || f == rec.final_verdicts.end()) {
        throw ValidationError("record '" + rec.item_id + "' lacks verdicts for '" + m.name + "'");
      }
      ++m.items;
      m.correct_base += b->second.correct ? 1 : 0;
      m.correct_attack += f->second.correct ? 1 : 0;
    }
  }
  return s;
}

// Exports each successful perturbation into a copy of `set`.
inline void export_perturbed_dataset(const BenchmarkSet& set,
                                     const std::vector<AttackRecord>& records,
                                     const std::filesystem::path& path,
                                     const Json& header = Json()) {
  std::vector<PerturbedItem> perturbations;
  for (const auto& r : records) {
    if (r.status == AttackStatus::kSuccess && r.perturbed) perturbations.push_back(*r.perturbed);
  }
  export_perturbed_dataset(set, perturbations, path, header);
}

// ---------------------------------------------------------------------------
// Experiment driver

// Runs `work(i)` for i in [0, n) on up to `workers` threads.
inline void parallel_for(std::size_t n, std::size_t workers,
                         const std::function<void(std::size_t)>& work) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) work(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct ExperimentResult {
  std::vector<AttackRecord> records;
  EvaluationSummary summary;
};

// `ctx.source` and the oracles must be safe for concurrent use when
// `workers` > 1. Records come back in benchmark order.
inline ExperimentResult run_experiment(const BenchmarkSet& set, const AttackContext& ctx,
                                       std::size_t workers = 1, std::string label = "") {
  ExperimentResult out;
  out.records.resize(set.items.size());
  std::vector<std::string> ref_names;
  for (const auto* r : ctx.references) ref_names.push_back(r->name());

  parallel_for(set.items.size(), workers, [&](std::size_t i) {
    const BenchmarkItem& item = set.items[i];
    AttackRecord& rec = out.records[i];
    rec.item_id = item.id;
    rec.target = ctx.target->name();
    rec.references = ref_names;
    try {
      rec.baseline[ctx.target->name()] = ctx.target->evaluate(item);
      for (auto* r : ctx.references) rec.baseline[r->name()] = r->evaluate(item);
      AttackResult res = greedy_attack(item, rec.baseline, ctx);
      rec.status = res.status;
      rec.queries_used = res.queries_used;
      rec.trace = std::move(res.trace);
      if (res.status == AttackStatus::kSuccess) {
        rec.perturbed = *res.best_candidate;
        rec.final_verdicts[ctx.target->name()] = ctx.target->evaluate(item, *rec.perturbed);
        for (auto* r : ctx.references) rec.final_verdicts[r->name()] = r->evaluate(item, *rec.perturbed);
      } else {
        rec.final_verdicts = rec.baseline;
      }
    } catch (const Error& e) {
      rec.status = AttackStatus::kQuarantined;
      rec.quarantine_reason = e.what();
      rec.perturbed.reset();
      rec.trace.clear();
    }
  });
  out.summary = summarize_records(out.records, ctx.target->name(), ref_names, std::move(label));
  return out;
}

}  // namespace selattack
