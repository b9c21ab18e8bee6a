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

// Command implementations behind the CLI. Each command takes a validated
// RunConfig, writes its artifacts under cfg.out_dir and returns a process
// exit code alongside its in-memory results.

#pragma once

#include <algorithm>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/cache.hpp"
#include "selattack/config.hpp"
#include "selattack/constraint.hpp"
#include "selattack/http.hpp"
#include "selattack/mock.hpp"
#include "selattack/report.hpp"
#include "selattack/search.hpp"
#include "selattack/selectivity.hpp"
#include "selattack/surrogate.hpp"
#include "selattack/transform.hpp"

namespace selattack {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitQuarantine = 3;
inline constexpr int kExitPartial = 4;
inline constexpr int kExitDegradation = 10;
inline constexpr int kExitImprovement = 11;

inline int exit_code_for(SelectivityCategory c) {
  switch (c) {
    case SelectivityCategory::kSelectiveDegradation: return kExitDegradation;
    case SelectivityCategory::kSelectiveImprovement: return kExitImprovement;
    case SelectivityCategory::kNonSelective: return kExitOk;
  }
  return kExitOk;
}

// Mock specs that name files resolve against the config directory.
inline std::string resolve_mock_spec(const RunConfig& cfg, const std::string& spec) {
  for (std::string_view prefix : {"table:", "script:", "fills-table:"}) {
    if (spec.starts_with(prefix)) {
      return std::string(prefix) + cfg.resolve(spec.substr(prefix.size())).string();
    }
  }
  return spec;
}

inline std::shared_ptr<AnswerModel> make_answer_model(const RunConfig& cfg, const ModelHandle& h) {
  if (h.is_mock()) return make_mock(resolve_mock_spec(cfg, h.mock_spec()));
  return std::make_shared<HttpChatModel>(h);
}

inline std::shared_ptr<TextGenerator> make_generator(const RunConfig& cfg, const ModelHandle& base,
                                                     const std::string& endpoint) {
  if (endpoint.starts_with("mock:")) {
    return std::make_shared<MockGenerator>(resolve_mock_spec(cfg, endpoint.substr(5)));
  }
  ModelHandle h = base;
  h.endpoint = endpoint;
  return std::make_shared<HttpChatModel>(h);
}

inline std::shared_ptr<SentenceEncoder> make_encoder(const RunConfig& cfg, const std::string& spec) {
  if (spec.starts_with("mock:")) return make_mock_encoder(spec.substr(5));
  const ModelHandle* h = cfg.find_model(spec);
  if (!h) throw ConfigError("unknown encoder '" + spec + "'");
  if (h->is_mock()) return make_mock_encoder(h->mock_spec());
  return std::make_shared<HttpEncoder>(*h);
}

// Models, caches and constraint resources shared by the commands.
struct Runtime {
  RunConfig cfg;
  std::shared_ptr<VerdictCache> cache;
  std::vector<std::unique_ptr<Evaluator>> evaluators;
  Evaluator* target = nullptr;
  std::vector<Evaluator*> references;
  std::shared_ptr<SentenceEncoder> encoder;
  LexiconTagger tagger;
  std::size_t workers = 1;

  [[nodiscard]] std::size_t model_calls() const {
    std::size_t n = 0;
    for (const auto& e : evaluators) n += e->model_calls();
    return n;
  }
};

inline std::unique_ptr<Runtime> make_runtime(const RunConfig& cfg, const ConstraintSet& constraints) {
  auto rt = std::make_unique<Runtime>();
  rt->cfg = cfg;
  rt->cache = cfg.cache.empty() ? std::make_shared<VerdictCache>()
                                : std::make_shared<VerdictCache>(cfg.resolve(cfg.cache));
  std::size_t cap = 0;
  for (const auto& m : cfg.models) {
    if (m.role != Role::kTarget && m.role != Role::kReference) continue;
    auto e = std::make_unique<Evaluator>(m.name, make_answer_model(cfg, m), cfg.scoring, cfg.prompt,
                                         rt->cache);
    if (m.role == Role::kTarget) {
      rt->target = e.get();
    } else {
      rt->references.push_back(e.get());
    }
    if (!m.is_mock()) cap = cap ? std::min(cap, m.max_in_flight) : m.max_in_flight;
    rt->evaluators.push_back(std::move(e));
  }
  if (!rt->target) throw ConfigError("no target model");
  if (constraints.semantic.enabled) rt->encoder = make_encoder(cfg, constraints.semantic.encoder);
  rt->tagger = LexiconTagger::builtin();
  if (!constraints.grammatical.lexicon.empty()) {
    rt->tagger = LexiconTagger::load(cfg.resolve(constraints.grammatical.lexicon), rt->tagger);
  }
  std::size_t w = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
  if (cap) w = std::min(w, cap);
  rt->workers = std::max<std::size_t>(1, w);
  return rt;
}

inline std::unique_ptr<CandidateSource> make_candidate_source(const RunConfig& cfg) {
  const RecipeOptions& o = cfg.recipe_options;
  switch (cfg.recipe) {
    case Recipe::kChar:
      return std::make_unique<CharEditSource>(
          *cfg.seed, o.keyboard.empty() ? KeyboardLayout::qwerty()
                                        : KeyboardLayout::load(cfg.resolve(o.keyboard)));
    case Recipe::kEmbed: {
      std::shared_ptr<EmbeddingSource> src;
      if (!o.embedding_table.empty()) {
        src = std::make_shared<StaticEmbeddingTable>(
            StaticEmbeddingTable::load(cfg.resolve(o.embedding_table)));
      } else {
        std::vector<std::string> vocab;
        for (const auto& line : split(read_file(cfg.resolve(o.vocabulary)), '\n')) {
          if (!trim(line).empty()) vocab.emplace_back(trim(line));
        }
        src = std::make_shared<EncoderEmbeddings>(
            make_encoder(cfg, cfg.with_role(Role::kEmbedder).at(0)->name), std::move(vocab));
      }
      return std::make_unique<EmbedSource>(std::move(src), o.k);
    }
    case Recipe::kMaskfill: {
      const ModelHandle& h = *cfg.with_role(Role::kMaskfill).at(0);
      std::shared_ptr<MaskFiller> filler;
      if (h.is_mock()) {
        filler = std::make_shared<MockMaskFiller>(resolve_mock_spec(cfg, h.mock_spec()));
      } else {
        filler = std::make_shared<HttpMaskFiller>(h);
      }
      return std::make_unique<MaskFillSource>(std::move(filler), o.k, o.mask_marker);
    }
    case Recipe::kReduction: return std::make_unique<ReductionSource>();
  }
  throw ConfigError("unsupported recipe");
}

// The configuration as embedded in outputs. Output and cache locations and
// the worker count do not change results, so they are left out; reruns stay
// byte-identical wherever they write.
inline Json config_echo(const RunConfig& cfg) {
  Json j = config_to_json(cfg);
  j.erase("out");
  j.erase("cache");
  j.erase("workers");
  return j;
}

inline Json provenance_header(const RunConfig& cfg) {
  return {{"tool", "selattack"}, {"version", kVersion}, {"config", config_echo(cfg)}};
}

inline std::string safe_file_name(std::string_view id) {
  std::string out;
  for (char c : id) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'
                      ? c
                      : '_');
  }
  return out.empty() ? "_" : out;
}

inline void write_manifest(const std::filesystem::path& dir, const RunConfig& cfg,
                           const std::string& command, const std::vector<std::string>& artifacts) {
  Json m = provenance_header(cfg);
  m["command"] = command;
  m["artifacts"] = artifacts;
  write_file(dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

struct EvaluateOutcome {
  EvaluationSummary summary;
  std::vector<AttackRecord> records;
  std::size_t model_calls = 0;
  int exit_code = kExitOk;
};

// Baseline accuracy of every target and reference model.
inline EvaluateOutcome cmd_evaluate(const RunConfig& cfg) {
  validate_config(cfg, false);
  const BenchmarkSet set = load_benchmark(cfg.resolve(cfg.benchmark_path), cfg.benchmark_format);
  ConstraintSet none = cfg.constraints;
  none.semantic.enabled = false;
  auto rt = make_runtime(cfg, none);
  EvaluateOutcome out;
  out.records.resize(set.items.size());
  std::vector<std::string> refs;
  for (auto* r : rt->references) refs.push_back(r->name());
  parallel_for(set.items.size(), rt->workers, [&](std::size_t i) {
    AttackRecord& rec = out.records[i];
    rec.item_id = set.items[i].id;
    rec.target = rt->target->name();
    rec.references = refs;
    try {
      rec.baseline[rt->target->name()] = rt->target->evaluate(set.items[i]);
      for (auto* r : rt->references) rec.baseline[r->name()] = r->evaluate(set.items[i]);
      rec.final_verdicts = rec.baseline;
    } catch (const Error& e) {
      rec.status = AttackStatus::kQuarantined;
      rec.quarantine_reason = e.what();
    }
  });
  out.summary = summarize_records(out.records, rt->target->name(), refs, "baseline");
  out.summary.config = config_echo(cfg);
  out.model_calls = rt->model_calls();

  const std::filesystem::path dir = cfg.resolve(cfg.out_dir);
  ReportBundle b;
  b.summary = out.summary;
  b.records = out.records;
  write_reports(b, dir, "evaluate");
  write_manifest(dir, cfg, "evaluate", {"evaluate.json", "evaluate.csv", "evaluate.md", "evaluate.svg"});
  const std::size_t total = out.summary.item_count + out.summary.quarantined;
  if (total && static_cast<double>(out.summary.quarantined) / total > cfg.max_quarantine_fraction) {
    out.exit_code = kExitQuarantine;
  }
  return out;
}

struct AttackOutcome {
  ExperimentResult result;
  SelectivityAssessment assessment;
  RankShift ranks;
  int exit_code = kExitOk;
};

inline AttackOutcome cmd_attack(const RunConfig& cfg) {
  validate_config(cfg);
  const BenchmarkSet set = load_benchmark(cfg.resolve(cfg.benchmark_path), cfg.benchmark_format);
  auto rt = make_runtime(cfg, cfg.constraints);
  auto source = make_candidate_source(cfg);

  AttackContext ctx;
  ctx.target = rt->target;
  ctx.references = rt->references;
  ctx.source = source.get();
  ctx.constraints = &cfg.constraints;
  ctx.encoder = rt->encoder.get();
  ctx.tagger = &rt->tagger;
  ctx.goal = cfg.goal;
  ctx.budget = cfg.budget;

  AttackOutcome out;
  out.result = run_experiment(set, ctx, rt->workers, std::string(to_string(cfg.recipe)));
  out.result.summary.config = config_echo(cfg);
  out.assessment = assess_summary(out.result.summary, cfg.threshold, cfg.aggregate);
  out.ranks = rank_shift(out.result.summary);

  const std::filesystem::path dir = cfg.resolve(cfg.out_dir);
  std::string records;
  for (const auto& r : out.result.records) records += record_to_json(r).dump() + "\n";
  write_file(dir / "records.jsonl", records);
  ReportBundle b{out.result.summary, out.assessment, out.ranks, out.result.records};
  write_reports(b, dir, "report");
  export_perturbed_dataset(set, out.result.records, dir / "perturbed.jsonl", provenance_header(cfg));
  std::vector<std::string> artifacts{"records.jsonl", "report.json", "report.csv",
                                     "report.md",     "report.svg",  "perturbed.jsonl",
                                     "perturbed.jsonl.provenance.jsonl"};
  if (cfg.trace) {
    for (const auto& r : out.result.records) {
      std::string lines;
      for (const auto& t : r.trace) lines += trace_entry_to_json(t).dump() + "\n";
      const std::string name = "traces/" + safe_file_name(r.item_id) + ".jsonl";
      write_file(dir / name, lines);
      artifacts.push_back(name);
    }
  }
  write_manifest(dir, cfg, "attack", artifacts);

  const auto& s = out.result.summary;
  const std::size_t total = s.item_count + s.quarantined;
  if (total && static_cast<double>(s.quarantined) / total > cfg.max_quarantine_fraction) {
    out.exit_code = kExitQuarantine;
  } else {
    out.exit_code = exit_code_for(out.assessment.category);
  }
  return out;
}

struct AssessOutcome {
  EvaluationSummary summary;
  SelectivityAssessment assessment;
  RankShift ranks;
  int exit_code = kExitOk;
};

// Re-scores stored attack records under the configured threshold/aggregate.
inline AssessOutcome cmd_assess(const RunConfig& cfg, const std::filesystem::path& records_path) {
  const auto records = read_records(records_path);
  if (records.empty()) throw ValidationError("no records in '" + records_path.string() + "'");
  AssessOutcome out;
  out.summary = summarize_records(records, records.front().target, records.front().references, "assess");
  out.summary.config = config_echo(cfg);
  out.assessment = assess_summary(out.summary, cfg.threshold, cfg.aggregate);
  out.ranks = rank_shift(out.summary);
  const std::filesystem::path dir = cfg.resolve(cfg.out_dir);
  ReportBundle b{out.summary, out.assessment, out.ranks, records};
  write_file(dir / "assess.json", render_json(b).dump(2) + "\n");
  write_file(dir / "assess.md", render_markdown(b));
  out.exit_code = exit_code_for(out.assessment.category);
  return out;
}

inline void cmd_export(const RunConfig& cfg, const std::filesystem::path& records_path,
                       const std::filesystem::path& out_path) {
  const BenchmarkSet set = load_benchmark(cfg.resolve(cfg.benchmark_path), cfg.benchmark_format);
  export_perturbed_dataset(set, read_records(records_path), out_path, provenance_header(cfg));
}

// Combines summaries (report.json, summary json or csv files) into one
// table; writes <stem>.md, <stem>.csv and <stem>.svg.
inline std::vector<EvaluationSummary> cmd_report(const std::vector<std::filesystem::path>& inputs,
                                                 const std::filesystem::path& stem) {
  std::vector<EvaluationSummary> runs;
  for (const auto& p : inputs) {
    if (p.extension() == ".csv") {
      runs.push_back(parse_summary_csv(read_file(p)));
      continue;
    }
    Json j;
    try {
      j = Json::parse(read_file(p));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(p.string() + ": " + e.what());
    }
    runs.push_back(summary_from_json(j.contains("summary") ? j["summary"] : j));
  }
  std::string csv;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::string part = render_csv(runs[i]);
    if (i) part = part.substr(part.find('\n') + 1);
    csv += part;
  }
  write_file(stem.string() + ".md", render_markdown(runs));
  write_file(stem.string() + ".csv", runs.empty() ? std::string(kSummaryCsvHeader) + "\n" : csv);
  write_file(stem.string() + ".svg", render_svg(runs));
  return runs;
}

struct SurrogateOutcome {
  CycleResult cycle;
  int exit_code = kExitOk;
};

inline SurrogateOutcome cmd_surrogate(const RunConfig& cfg) {
  validate_config(cfg);
  const auto generators = cfg.with_role(Role::kGenerator);
  if (generators.size() != 1) {
    throw ConfigError("surrogate needs exactly one model with the generator role");
  }
  const ModelHandle generator = *generators[0];
  const BenchmarkSet set = load_benchmark(cfg.resolve(cfg.benchmark_path), cfg.benchmark_format);
  auto rt = make_runtime(cfg, cfg.surrogate_constraints);
  auto trainer = make_trainer(cfg.surrogate.trainer);

  CycleContext ctx;
  ctx.target = rt->target;
  ctx.references = rt->references;
  ctx.constraints = &cfg.surrogate_constraints;
  ctx.encoder = rt->encoder.get();
  ctx.tagger = &rt->tagger;
  ctx.config = cfg.surrogate;
  ctx.seed = *cfg.seed;
  ctx.workers = rt->workers;
  ctx.make_generator = [&](const std::string& endpoint) {
    return make_generator(cfg, generator, endpoint);
  };
  ctx.trainer = trainer.get();
  ctx.generator_endpoint = generator.endpoint;
  const std::filesystem::path dir = cfg.resolve(cfg.out_dir) / "surrogate";
  ctx.out_dir = dir;
  ctx.config_echo = config_echo(cfg);

  SurrogateOutcome out;
  out.cycle = run_cycle(set, ctx);
  std::vector<EvaluationSummary> runs;
  Json iterations = Json::array();
  for (const auto& it : out.cycle.iterations) {
    runs.push_back(it.summary);
    iterations.push_back(iteration_to_json(it));
  }
  Json j = provenance_header(cfg);
  j["iterations"] = iterations;
  j["partial_failure"] = out.cycle.partial_failure;
  if (out.cycle.partial_failure) j["failure"] = out.cycle.failure;
  write_file(dir / "report.json", j.dump(2) + "\n");
  std::string md = render_markdown(runs);
  md += "\n† target model. Cost convention: lower is better; references judged by " +
        std::string(to_string(cfg.surrogate_constraints.selective.reference_mode)) + ".\n";
  if (out.cycle.partial_failure) md += "\nPartial failure: " + out.cycle.failure + "\n";
  md += "\n<!-- selattack " + std::string(kVersion) + " config: " + config_echo(cfg).dump() + " -->\n";
  write_file(dir / "report.md", md);
  write_file(dir / "report.svg", render_svg(runs, config_echo(cfg)));

  if (out.cycle.partial_failure) {
    out.exit_code = kExitPartial;
  } else if (!runs.empty()) {
    const auto& s = runs.back();
    const std::size_t total = s.item_count + s.quarantined;
    if (total && static_cast<double>(s.quarantined) / total > cfg.max_quarantine_fraction) {
      out.exit_code = kExitQuarantine;
    }
  }
  return out;
}

}  // namespace selattack
