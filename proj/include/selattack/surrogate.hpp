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

// Paraphrase sampling with a surrogate generator: cost scoring, best/worst
// selection, SFT/DPO dataset emission, inference-time selection and the
// train-and-resample cycle.
//
// Cost convention: lower is better. L = w * L_target + (1 - w) * L_other,
// where L_target is 0 when the target moved in the wanted direction and
// L_other is the fraction of references whose letter changed.

#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "selattack/benchmark.hpp"
#include "selattack/cache.hpp"
#include "selattack/constraint.hpp"
#include "selattack/http.hpp"
#include "selattack/log.hpp"
#include "selattack/search.hpp"
#include "selattack/selectivity.hpp"
#include "selattack/transform.hpp"

namespace selattack {

enum class SurrogateDirection { kMinimizeTarget, kMaximizeTarget };

inline std::string_view to_string(SurrogateDirection d) {
  return d == SurrogateDirection::kMinimizeTarget ? "minimize-target" : "maximize-target";
}

inline SurrogateDirection parse_surrogate_direction(std::string_view s) {
  if (s == "minimize-target") return SurrogateDirection::kMinimizeTarget;
  if (s == "maximize-target") return SurrogateDirection::kMaximizeTarget;
  throw ConfigError("unknown surrogate direction '" + std::string(s) +
                    "' (minimize-target, maximize-target)");
}

inline SelectiveDirection selective_direction(SurrogateDirection d) {
  return d == SurrogateDirection::kMinimizeTarget ? SelectiveDirection::kDegrade
                                                  : SelectiveDirection::kImprove;
}

struct SurrogateConfig {
  std::size_t m = 5;
  double w = 0.5;
  SurrogateDirection direction = SurrogateDirection::kMinimizeTarget;
  std::size_t iterations = 3;
  double temperature = 0.7;
  int max_tokens = 256;
  // Dataset handed to the trainer: "dpo" or "sft".
  std::string method = "dpo";
  // "mock:<spec>", "cmd:<template>" or an http(s) URL.
  std::string trainer = "mock:sharpen:0.1";
};

inline void validate_surrogate_config(const SurrogateConfig& c) {
  if (c.m < 1) throw ConfigError("surrogate.m must be at least 1");
  if (!(c.w > 0.0 && c.w < 1.0)) throw ConfigError("surrogate.w must lie in (0, 1)");
  if (c.method != "dpo" && c.method != "sft") {
    throw ConfigError("surrogate.method must be dpo or sft");
  }
  if (c.method == "dpo" && c.m < 2) {
    throw ConfigError("surrogate.m must be at least 2 to build preference pairs");
  }
}

inline double paraphrase_cost(double l_target, double l_other, double w) {
  return w * l_target + (1.0 - w) * l_other;
}

struct ParaphraseScore {
  // Generation order within the item's batch.
  std::size_t index = 0;
  CandidatePerturbation candidate;
  double l_target = 0.0;
  double l_other = 0.0;
  double w = 0.5;
  double l = 0.0;
  Verdict target;
  std::vector<Verdict> references;
};

inline PerturbedItem as_perturbed(const BenchmarkItem& item, const CandidatePerturbation& c) {
  PerturbedItem p = identity_perturbation(item);
  commit_edit(p, c.edit);
  return p;
}

inline ParaphraseScore score_from_verdicts(std::size_t index, CandidatePerturbation candidate,
                                           Verdict target, std::vector<Verdict> references,
                                           const VerdictMap& baseline, double w,
                                           SurrogateDirection direction) {
  ParaphraseScore s;
  s.index = index;
  s.candidate = std::move(candidate);
  s.w = w;
  s.l_target = target_goal_met(target, selective_direction(direction)) ? 0.0 : 1.0;
  std::size_t changed = 0;
  for (const auto& r : references) {
    const auto it = baseline.find(r.model);
    if (it == baseline.end()) throw ValidationError("no baseline verdict for '" + r.model + "'");
    if (r.letter != it->second.letter) ++changed;
  }
  s.l_other = references.empty()
                  ? 0.0
                  : static_cast<double>(changed) / static_cast<double>(references.size());
  s.l = paraphrase_cost(s.l_target, s.l_other, w);
  s.target = std::move(target);
  s.references = std::move(references);
  return s;
}

inline ParaphraseScore score_paraphrase(const BenchmarkItem& item,
                                        const CandidatePerturbation& candidate, std::size_t index,
                                        Evaluator& target, const std::vector<Evaluator*>& references,
                                        const VerdictMap& baseline, double w,
                                        SurrogateDirection direction) {
  const PerturbedItem p = as_perturbed(item, candidate);
  Verdict t = target.evaluate(item, p);
  std::vector<Verdict> refs;
  for (auto* r : references) refs.push_back(r->evaluate(item, p));
  return score_from_verdicts(index, candidate, std::move(t), std::move(refs), baseline, w,
                             direction);
}

struct BestWorst {
  std::size_t best = 0;
  std::size_t worst = 0;
  bool pair_eligible = false;
};

// Positions into `scores`; the earliest candidate wins ties on either end.
inline BestWorst select_best_worst(const std::vector<ParaphraseScore>& scores) {
  if (scores.empty()) throw ValidationError("no scored paraphrases to select from");
  BestWorst bw;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].l < scores[bw.best].l) bw.best = i;
    if (scores[i].l > scores[bw.worst].l) bw.worst = i;
  }
  bw.pair_eligible = scores[bw.best].l < scores[bw.worst].l;
  return bw;
}

// Scored paraphrases of one item.
struct SurrogateItem {
  std::string item_id;
  std::string question;
  std::vector<ParaphraseScore> scores;
  std::optional<BestWorst> selection;
  std::vector<RejectedParaphrase> rejected;
  std::string quarantine_reason;
};

inline std::string dpo_prompt(std::string_view question) {
  return std::string(kParaphraseSystemPrompt) + "\n\n" + std::string(question);
}

// Writes {instruction, input, output} for every item whose best paraphrase
// met the target goal. Returns the record count.
inline std::size_t emit_sft_dataset(const std::vector<SurrogateItem>& items,
                                    const std::filesystem::path& path) {
  std::string out;
  std::size_t n = 0;
  for (const auto& it : items) {
    if (!it.selection) continue;
    const auto& best = it.scores[it.selection->best];
    if (best.l_target != 0.0) continue;
    Json j;
    j["instruction"] = kParaphraseSystemPrompt;
    j["input"] = it.question;
    j["output"] = best.candidate.text;
    out += j.dump() + "\n";
    ++n;
  }
  if (n == 0) warn("SFT dataset '" + path.string() + "' is empty: no successful best paraphrase");
  write_file(path, out);
  return n;
}

// Writes {prompt, chosen, rejected, margin} for every pair-eligible item.
inline std::size_t emit_dpo_dataset(const std::vector<SurrogateItem>& items,
                                    const std::filesystem::path& path) {
  std::string out;
  std::size_t n = 0;
  std::vector<std::string> flat;
  for (const auto& it : items) {
    if (!it.selection) continue;
    if (!it.selection->pair_eligible) {
      flat.push_back(it.item_id);
      continue;
    }
    const auto& best = it.scores[it.selection->best];
    const auto& worst = it.scores[it.selection->worst];
    if (!(best.l < worst.l)) throw ValidationError("DPO pair without a strict margin");
    Json j;
    j["prompt"] = dpo_prompt(it.question);
    j["chosen"] = best.candidate.text;
    j["rejected"] = worst.candidate.text;
    j["margin"] = worst.l - best.l;
    out += j.dump() + "\n";
    ++n;
  }
  if (!flat.empty()) {
    std::string ids;
    for (std::size_t i = 0; i < flat.size() && i < 5; ++i) ids += (i ? ", " : "") + flat[i];
    if (flat.size() > 5) ids += ", ...";
    warn("DPO: " + std::to_string(flat.size()) + " item(s) skipped, every paraphrase has the same cost (" +
         ids + ")");
  }
  write_file(path, out);
  return n;
}

namespace detail {

inline void require_string(const Json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) throw ParseError(where + ": missing field \"" + field + "\"");
  if (!j[field].is_string()) throw ParseError(where + ": field \"" + field + "\" is not a string");
}

}  // namespace detail

struct SftRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

struct DpoRecord {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  double margin = 0.0;
};

// Schema readers matching what the trainer accepts. Errors name the line and
// the field.
inline std::vector<SftRecord> read_sft_dataset(const std::filesystem::path& path) {
  std::vector<SftRecord> out;
  const std::string name = path.filename().string();
  for_each_json_line(read_file(path), name, [&](const Json& j, std::size_t line) {
    const std::string where = name + " line " + std::to_string(line);
    for (const char* f : {"instruction", "input", "output"}) detail::require_string(j, f, where);
    out.push_back({j["instruction"].get<std::string>(), j["input"].get<std::string>(),
                   j["output"].get<std::string>()});
  });
  return out;
}

inline std::vector<DpoRecord> read_dpo_dataset(const std::filesystem::path& path) {
  std::vector<DpoRecord> out;
  const std::string name = path.filename().string();
  for_each_json_line(read_file(path), name, [&](const Json& j, std::size_t line) {
    const std::string where = name + " line " + std::to_string(line);
    for (const char* f : {"prompt", "chosen", "rejected"}) detail::require_string(j, f, where);
    if (!j.contains("margin") || !j["margin"].is_number()) {
      throw ParseError(where + ": field \"margin\" missing or not a number");
    }
    DpoRecord r{j["prompt"].get<std::string>(), j["chosen"].get<std::string>(),
                j["rejected"].get<std::string>(), j["margin"].get<double>()};
    if (!(r.margin > 0.0)) throw ParseError(where + ": field \"margin\" must be positive");
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Inference-time selection

struct InferenceChoice {
  PerturbedItem chosen;
  // True when no candidate survived the constraints and the original stays.
  bool fallback = false;
  bool selective = false;
  std::optional<std::size_t> chosen_index;
  std::optional<ParaphraseScore> score;
};

// Among admissible scores: the lowest-cost one passing the selective check,
// else the lowest-cost one overall. Returns a position into `scores`.
inline std::optional<std::size_t> choose_candidate(const std::vector<ParaphraseScore>& scores,
                                                   const std::vector<bool>& admissible,
                                                   const VerdictMap& baseline, ReferenceMode mode,
                                                   SurrogateDirection direction,
                                                   bool* selective = nullptr) {
  std::optional<std::size_t> best_sel;
  std::optional<std::size_t> best_any;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!admissible[i]) continue;
    if (!best_any || scores[i].l < scores[*best_any].l) best_any = i;
    if (selective_pass(scores[i].target, scores[i].references, baseline, mode,
                       selective_direction(direction)) &&
        (!best_sel || scores[i].l < scores[*best_sel].l)) {
      best_sel = i;
    }
  }
  if (selective) *selective = best_sel.has_value();
  return best_sel ? best_sel : best_any;
}

struct InferenceContext {
  Evaluator* target = nullptr;
  std::vector<Evaluator*> references;
  const ConstraintSet* constraints = nullptr;
  SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
  double w = 0.5;
  SurrogateDirection direction = SurrogateDirection::kMinimizeTarget;
};

inline std::vector<bool> admissible_paraphrases(const BenchmarkItem& item,
                                                const std::vector<CandidatePerturbation>& cands,
                                                const InferenceContext& ctx) {
  const CheapCheckContext cheap{ctx.constraints, ctx.encoder, ctx.tagger, nullptr};
  std::vector<bool> out;
  for (const auto& c : cands) out.push_back(check_cheap(item.question, c, cheap).admissible());
  return out;
}

inline InferenceChoice inference_select(const BenchmarkItem& item,
                                        const std::vector<CandidatePerturbation>& candidates,
                                        const VerdictMap& baseline, const InferenceContext& ctx) {
  const auto admissible = admissible_paraphrases(item, candidates, ctx);
  std::vector<ParaphraseScore> scores;
  std::vector<bool> keep;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!admissible[i]) continue;
    scores.push_back(score_paraphrase(item, candidates[i], i, *ctx.target, ctx.references, baseline,
                                      ctx.w, ctx.direction));
    keep.push_back(true);
  }
  InferenceChoice choice;
  const auto pick = choose_candidate(scores, keep, baseline, ctx.constraints->selective.reference_mode,
                                     ctx.direction, &choice.selective);
  if (!pick) {
    choice.chosen = identity_perturbation(item);
    choice.fallback = true;
    return choice;
  }
  choice.chosen = as_perturbed(item, scores[*pick].candidate);
  choice.chosen_index = scores[*pick].index;
  choice.score = scores[*pick];
  return choice;
}

// ---------------------------------------------------------------------------
// Trainers

class TrainerError : public Error {
 public:
  using Error::Error;
};

struct TrainRequest {
  std::string method;
  std::filesystem::path sft;
  std::filesystem::path dpo;
  std::size_t iteration = 0;
  std::string generator;
};

// Datasets in, serving generator endpoint out.
class Trainer {
 public:
  virtual ~Trainer() = default;
  virtual std::string train(const TrainRequest& request) = 0;
};

// mock:sharpen:<step>   raises the rate of an inject:<word>:<p> generator by
//                       <step> per call
// mock:fail-at:<k>      fails on iteration k, otherwise keeps the generator
class MockTrainer final : public Trainer {
 public:
  explicit MockTrainer(std::string_view spec) : spec_(spec) {
    try {
      if (spec.starts_with("sharpen:")) {
        step_ = std::stod(std::string(spec.substr(8)));
      } else if (spec.starts_with("fail-at:")) {
        fail_at_ = std::stoul(std::string(spec.substr(8)));
      } else {
        throw ConfigError("");
      }
    } catch (const std::exception&) {
      throw ConfigError("unknown trainer mock spec '" + std::string(spec) + "'");
    }
  }

  std::string train(const TrainRequest& request) override {
    if (fail_at_ && request.iteration == *fail_at_) {
      throw TrainerError("trainer unreachable at iteration " + std::to_string(request.iteration));
    }
    // Validate what a real trainer would read.
    if (request.method == "sft") {
      read_sft_dataset(request.sft);
    } else {
      read_dpo_dataset(request.dpo);
    }
    if (!step_) return request.generator;
    const std::string prefix = "mock:inject:";
    if (!request.generator.starts_with(prefix)) {
      throw TrainerError("sharpen trainer needs an inject generator, got '" + request.generator + "'");
    }
    const auto parts = split(std::string_view(request.generator).substr(prefix.size()), ':');
    if (parts.size() != 2) throw TrainerError("malformed generator '" + request.generator + "'");
    const double p = std::min(1.0, std::stod(parts[1]) + *step_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", p);
    return prefix + parts[0] + ":" + buf;
  }

 private:
  std::string spec_;
  std::optional<double> step_;
  std::optional<std::size_t> fail_at_;
};

namespace detail {

inline std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

}  // namespace detail

// Runs a shell command template. Placeholders: {method} {data} {sft} {dpo}
// {iteration} {generator}; {data} is the dataset for the configured method.
// The command must exit 0 and print the serving endpoint on its last
// non-empty stdout line.
class CommandTrainer final : public Trainer {
 public:
  explicit CommandTrainer(std::string tpl) : template_(std::move(tpl)) {}

  std::string train(const TrainRequest& r) override {
    const std::string data = r.method == "sft" ? r.sft.string() : r.dpo.string();
    const std::map<std::string, std::string> values{
        {"method", r.method},   {"data", data},
        {"sft", r.sft.string()}, {"dpo", r.dpo.string()},
        {"iteration", std::to_string(r.iteration)}, {"generator", r.generator}};
    std::string cmd;
    for (std::size_t i = 0; i < template_.size(); ++i) {
      if (template_[i] == '{') {
        const auto close = template_.find('}', i);
        if (close != std::string::npos) {
          const auto it = values.find(template_.substr(i + 1, close - i - 1));
          if (it != values.end()) {
            cmd += detail::shell_quote(it->second);
            i = close;
            continue;
          }
        }
      }
      cmd.push_back(template_[i]);
    }
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw TrainerError("cannot start trainer command");
    std::string output;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) {
      throw TrainerError("trainer command failed (status " +
                         std::to_string(WIFEXITED(status) ? WEXITSTATUS(status) : status) + ")");
    }
    std::string endpoint;
    for (const auto& line : split(output, '\n')) {
      if (!trim(line).empty()) endpoint = std::string(trim(line));
    }
    if (endpoint.empty()) throw TrainerError("trainer command printed no endpoint");
    return endpoint;
  }

 private:
  std::string template_;
};

// POST <url>/train {method, data, iteration, generator} -> {endpoint}
class HttpTrainer final : public Trainer {
 public:
  explicit HttpTrainer(const std::string& url, RetryPolicy retry = {})
      : endpoint_(url, "", 1, retry) {}

  std::string train(const TrainRequest& r) override {
    Json body;
    body["method"] = r.method;
    body["data"] = (r.method == "sft" ? r.sft : r.dpo).string();
    body["iteration"] = r.iteration;
    body["generator"] = r.generator;
    try {
      const Json res = endpoint_.post("/train", body);
      return res.at("endpoint").get<std::string>();
    } catch (const OracleError& e) {
      throw TrainerError(e.what());
    } catch (const nlohmann::json::exception& e) {
      throw TrainerError(std::string("trainer response: ") + e.what());
    }
  }

 private:
  HttpEndpoint endpoint_;
};

inline std::unique_ptr<Trainer> make_trainer(const std::string& spec) {
  if (spec.starts_with("mock:")) return std::make_unique<MockTrainer>(spec.substr(5));
  if (spec.starts_with("cmd:")) return std::make_unique<CommandTrainer>(spec.substr(4));
  if (spec.starts_with("http://") || spec.starts_with("https://")) {
    return std::make_unique<HttpTrainer>(spec);
  }
  throw ConfigError("trainer '" + spec + "' is not mock:, cmd: or an http(s) URL");
}

// ---------------------------------------------------------------------------
// Cycle

using GeneratorFactory = std::function<std::shared_ptr<TextGenerator>(const std::string&)>;

struct CycleContext {
  Evaluator* target = nullptr;
  std::vector<Evaluator*> references;
  const ConstraintSet* constraints = nullptr;
  SentenceEncoder* encoder = nullptr;
  const PosTagger* tagger = nullptr;
  SurrogateConfig config;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  GeneratorFactory make_generator;
  Trainer* trainer = nullptr;
  std::string generator_endpoint;
  std::filesystem::path out_dir;
  // Embedded into every manifest.
  Json config_echo = Json::object();
};

struct CycleIteration {
  std::size_t iteration = 0;
  std::string generator;
  EvaluationSummary summary;
  std::size_t sft_records = 0;
  std::size_t dpo_records = 0;
  std::size_t fallbacks = 0;
  std::size_t selective_choices = 0;
  std::filesystem::path dir;
};

struct CycleResult {
  std::vector<CycleIteration> iterations;
  bool partial_failure = false;
  std::string failure;
};

inline std::string iteration_label(std::size_t k) {
  return k == 0 ? "paraphrase-sampling" : "cycle-" + std::to_string(k);
}

inline Json iteration_to_json(const CycleIteration& it) {
  return {{"iteration", it.iteration},
          {"label", iteration_label(it.iteration)},
          {"generator", it.generator},
          {"sft_records", it.sft_records},
          {"dpo_records", it.dpo_records},
          {"fallbacks", it.fallbacks},
          {"selective_choices", it.selective_choices},
          {"summary", summary_to_json(it.summary)}};
}

namespace detail {

struct CycleItemOutcome {
  SurrogateItem scored;
  VerdictMap final_verdicts;
  bool fallback = false;
  bool selective = false;
  bool quarantined = false;
};

inline CycleItemOutcome cycle_item(const BenchmarkItem& item, const VerdictMap& baseline,
                                   TextGenerator& generator, const CycleContext& ctx,
                                   std::size_t iteration) {
  CycleItemOutcome out;
  out.scored.item_id = item.id;
  out.scored.question = item.question;
  const SurrogateConfig& cfg = ctx.config;
  const std::uint64_t seed = ctx.seed ^ stable_hash(item.id + "#" + std::to_string(iteration));
  auto batch = paraphrase_candidates(item, cfg.m, generator, {cfg.temperature, cfg.max_tokens, seed});
  out.scored.rejected = std::move(batch.rejected);

  const InferenceContext ictx{ctx.target, ctx.references, ctx.constraints, ctx.encoder,
                              ctx.tagger,  cfg.w,          cfg.direction};
  const auto admissible = admissible_paraphrases(item, batch.candidates, ictx);
  for (std::size_t i = 0; i < batch.candidates.size(); ++i) {
    out.scored.scores.push_back(score_paraphrase(item, batch.candidates[i], i, *ctx.target,
                                                 ctx.references, baseline, cfg.w, cfg.direction));
  }
  if (!out.scored.scores.empty()) out.scored.selection = select_best_worst(out.scored.scores);

  const auto pick = choose_candidate(out.scored.scores, admissible, baseline,
                                     ctx.constraints->selective.reference_mode, cfg.direction,
                                     &out.selective);
  if (!pick) {
    out.fallback = true;
    out.final_verdicts = baseline;
    return out;
  }
  const auto& s = out.scored.scores[*pick];
  out.final_verdicts[s.target.model] = s.target;
  for (const auto& r : s.references) out.final_verdicts[r.model] = r;
  return out;
}

}  // namespace detail

// Iteration 0 samples from the configured generator; each later iteration
// trains on the previous iteration's datasets first. A trainer failure stops
// the loop and keeps everything written so far.
inline CycleResult run_cycle(const BenchmarkSet& set, const CycleContext& ctx) {
  validate_surrogate_config(ctx.config);
  CycleResult result;
  std::vector<std::string> ref_names;
  for (auto* r : ctx.references) ref_names.push_back(r->name());

  std::vector<VerdictMap> baseline(set.items.size());
  std::vector<std::string> baseline_error(set.items.size());
  parallel_for(set.items.size(), ctx.workers, [&](std::size_t i) {
    try {
      baseline[i][ctx.target->name()] = ctx.target->evaluate(set.items[i]);
      for (auto* r : ctx.references) baseline[i][r->name()] = r->evaluate(set.items[i]);
    } catch (const Error& e) {
      baseline_error[i] = e.what();
    }
  });

  std::string endpoint = ctx.generator_endpoint;
  std::filesystem::path prev_sft;
  std::filesystem::path prev_dpo;
  for (std::size_t k = 0; k <= ctx.config.iterations; ++k) {
    if (k > 0) {
      try {
        if (!ctx.trainer) throw TrainerError("no trainer configured");
        endpoint = ctx.trainer->train({ctx.config.method, prev_sft, prev_dpo, k, endpoint});
      } catch (const Error& e) {
        result.partial_failure = true;
        result.failure = e.what();
        return result;
      }
    }
    std::shared_ptr<TextGenerator> generator;
    try {
      generator = ctx.make_generator(endpoint);
    } catch (const Error& e) {
      result.partial_failure = true;
      result.failure = e.what();
      return result;
    }

    std::vector<detail::CycleItemOutcome> outcomes(set.items.size());
    parallel_for(set.items.size(), ctx.workers, [&](std::size_t i) {
      auto& o = outcomes[i];
      if (!baseline_error[i].empty()) {
        o.quarantined = true;
        o.scored.item_id = set.items[i].id;
        o.scored.quarantine_reason = baseline_error[i];
        return;
      }
      try {
        o = detail::cycle_item(set.items[i], baseline[i], *generator, ctx, k);
      } catch (const Error& e) {
        o = {};
        o.quarantined = true;
        o.scored.item_id = set.items[i].id;
        o.scored.quarantine_reason = e.what();
      }
    });

    CycleIteration it;
    it.iteration = k;
    it.generator = endpoint;
    it.dir = ctx.out_dir / ("iter-" + std::to_string(k));
    std::vector<AttackRecord> records;
    std::vector<SurrogateItem> scored;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      auto& o = outcomes[i];
      AttackRecord rec;
      rec.item_id = set.items[i].id;
      rec.target = ctx.target->name();
      rec.references = ref_names;
      if (o.quarantined) {
        rec.status = AttackStatus::kQuarantined;
        rec.quarantine_reason = o.scored.quarantine_reason;
        warn("surrogate: item '" + rec.item_id + "' quarantined: " + rec.quarantine_reason);
      } else {
        rec.status = AttackStatus::kNotAttacked;
        rec.baseline = baseline[i];
        rec.final_verdicts = o.final_verdicts;
        it.fallbacks += o.fallback ? 1 : 0;
        it.selective_choices += o.selective ? 1 : 0;
        scored.push_back(std::move(o.scored));
      }
      records.push_back(std::move(rec));
    }
    it.summary = summarize_records(records, ctx.target->name(), ref_names, iteration_label(k));
    it.summary.config = ctx.config_echo;

    prev_sft = it.dir / "sft.jsonl";
    prev_dpo = it.dir / "dpo.jsonl";
    it.sft_records = emit_sft_dataset(scored, prev_sft);
    it.dpo_records = emit_dpo_dataset(scored, prev_dpo);
    Json manifest;
    manifest["tool"] = "selattack";
    manifest["version"] = kVersion;
    manifest["iteration"] = iteration_to_json(it);
    manifest["datasets"] = {{"sft", "sft.jsonl"}, {"dpo", "dpo.jsonl"}};
    manifest["config"] = ctx.config_echo;
    write_file(it.dir / "manifest.json", manifest.dump(2) + "\n");
    result.iterations.push_back(std::move(it));
  }
  return result;
}

}  // namespace selattack
