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

// Accuracy bookkeeping, manipulation magnitude and the selectivity verdicts
// built on it. Everything here is pure.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "selattack/benchmark.hpp"
#include "selattack/error.hpp"

namespace selattack {

// Slack for threshold comparisons, far below any count-based resolution.
inline constexpr double kSelectivityEpsilon = 1e-9;

inline double manipulation_magnitude(double s_attack, double s_base) {
  for (double s : {s_attack, s_base}) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("accuracy " + std::to_string(s) + " outside [0, 1]");
    }
  }
  return s_attack - s_base;
}

// Fixed two-decimal rendering used by every report ("-0.08", "0.00", "+0.02").
inline std::string format_delta(double d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", d);
  std::string s(buf);
  if (s == "+0.00" || s == "-0.00") return "0.00";
  return s;
}

inline std::string format_accuracy(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

enum class Aggregate { kMean, kMax, kMin };

inline std::string_view to_string(Aggregate a) {
  switch (a) {
    case Aggregate::kMean: return "mean";
    case Aggregate::kMax: return "max";
    case Aggregate::kMin: return "min";
  }
  return "?";
}

inline Aggregate parse_aggregate(std::string_view s) {
  if (s == "mean") return Aggregate::kMean;
  if (s == "max") return Aggregate::kMax;
  if (s == "min") return Aggregate::kMin;
  throw ConfigError("unknown aggregate '" + std::string(s) + "' (mean, max, min)");
}

enum class SelectivityCategory { kNonSelective, kSelectiveDegradation, kSelectiveImprovement };

inline std::string_view to_string(SelectivityCategory c) {
  switch (c) {
    case SelectivityCategory::kNonSelective: return "non-selective";
    case SelectivityCategory::kSelectiveDegradation: return "selective-degradation";
    case SelectivityCategory::kSelectiveImprovement: return "selective-improvement";
  }
  return "?";
}

inline SelectivityCategory parse_category(std::string_view s) {
  for (auto c : {SelectivityCategory::kNonSelective, SelectivityCategory::kSelectiveDegradation,
                 SelectivityCategory::kSelectiveImprovement}) {
    if (to_string(c) == s) return c;
  }
  throw ParseError("unknown selectivity category '" + std::string(s) + "'");
}

struct SelectivityAssessment {
  SelectivityCategory category = SelectivityCategory::kNonSelective;
  double target_delta = 0.0;
  std::vector<double> reference_deltas;
  double aggregate_delta = 0.0;
  // aggregate(reference deltas) - target delta.
  double gap = 0.0;
  double threshold = 0.10;
  Aggregate aggregate = Aggregate::kMean;
};

inline double aggregate_of(const std::vector<double>& xs, Aggregate a) {
  if (xs.empty()) throw ValidationError("selectivity needs at least one reference");
  switch (a) {
    case Aggregate::kMean:
      return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    case Aggregate::kMax: return *std::max_element(xs.begin(), xs.end());
    case Aggregate::kMin: return *std::min_element(xs.begin(), xs.end());
  }
  return 0.0;
}

// Classifies by the gap between the aggregated reference change and the
// target change. Only the gap matters, so shifting every delta by the same
// constant never changes the category.
inline SelectivityAssessment assess_selectivity(double target_delta,
                                                const std::vector<double>& reference_deltas,
                                                double threshold = 0.10,
                                                Aggregate aggregate = Aggregate::kMean) {
  SelectivityAssessment a;
  a.target_delta = target_delta;
  a.reference_deltas = reference_deltas;
  a.aggregate_delta = aggregate_of(reference_deltas, aggregate);
  a.gap = a.aggregate_delta - target_delta;
  a.threshold = threshold;
  a.aggregate = aggregate;
  if (a.gap > threshold + kSelectivityEpsilon) {
    a.category = SelectivityCategory::kSelectiveDegradation;
  } else if (-a.gap > threshold + kSelectivityEpsilon) {
    a.category = SelectivityCategory::kSelectiveImprovement;
  }
  return a;
}

struct FamilyMember {
  std::string name;
  double parameters = 0.0;
  double s_attack = 0.0;
};

// The largest member is the target. True iff a strictly smaller member ends
// with strictly higher post-attack accuracy.
inline bool family_selectivity(std::vector<FamilyMember> members) {
  if (members.size() < 2) throw ValidationError("family criterion needs at least two models");
  std::stable_sort(members.begin(), members.end(), [](const auto& a, const auto& b) {
    return a.parameters < b.parameters;
  });
  const FamilyMember& target = members.back();
  if (members[members.size() - 2].parameters == target.parameters) {
    throw ValidationError("family criterion: largest model is ambiguous");
  }
  for (std::size_t i = 0; i + 1 < members.size(); ++i) {
    if (members[i].s_attack > target.s_attack) return true;
  }
  return false;
}

struct RankShift {
  std::vector<std::string> before;
  std::vector<std::string> after;
  // (a, b): a ranked above b before and below b after.
  std::vector<std::pair<std::string, std::string>> inversions;
};

inline std::vector<std::string> rank_models(const std::map<std::string, double>& acc) {
  std::vector<std::string> names;
  for (const auto& [n, _] : acc) names.push_back(n);
  std::stable_sort(names.begin(), names.end(), [&](const auto& a, const auto& b) {
    const double x = acc.at(a);
    const double y = acc.at(b);
    return x != y ? x > y : a < b;
  });
  return names;
}

inline RankShift rank_shift(const std::map<std::string, double>& before,
                            const std::map<std::string, double>& after) {
  if (before.size() != after.size() ||
      !std::equal(before.begin(), before.end(), after.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    throw ValidationError("rank shift needs the same models before and after");
  }
  RankShift r;
  r.before = rank_models(before);
  r.after = rank_models(after);
  std::map<std::string, std::size_t> pos_after;
  for (std::size_t i = 0; i < r.after.size(); ++i) pos_after[r.after[i]] = i;
  for (std::size_t i = 0; i < r.before.size(); ++i) {
    for (std::size_t j = i + 1; j < r.before.size(); ++j) {
      if (pos_after[r.before[i]] > pos_after[r.before[j]]) {
        r.inversions.emplace_back(r.before[i], r.before[j]);
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Summaries

struct ModelSummary {
  std::string name;
  std::string role;
  std::size_t items = 0;
  std::size_t correct_base = 0;
  std::size_t correct_attack = 0;

  [[nodiscard]] double s_base() const {
    return items ? static_cast<double>(correct_base) / static_cast<double>(items) : 0.0;
  }
  [[nodiscard]] double s_attack() const {
    return items ? static_cast<double>(correct_attack) / static_cast<double>(items) : 0.0;
  }
  [[nodiscard]] double delta() const { return manipulation_magnitude(s_attack(), s_base()); }

  friend bool operator==(const ModelSummary&, const ModelSummary&) = default;
};

struct EvaluationSummary {
  // Column label in reports, usually the recipe.
  std::string label;
  std::string target;
  std::vector<ModelSummary> models;
  std::size_t item_count = 0;
  std::size_t quarantined = 0;
  Json config = Json::object();

  [[nodiscard]] const ModelSummary* find(std::string_view name) const {
    for (const auto& m : models) {
      if (m.name == name) return &m;
    }
    return nullptr;
  }

  [[nodiscard]] std::vector<std::string> reference_names() const {
    std::vector<std::string> out;
    for (const auto& m : models) {
      if (m.role == "reference") out.push_back(m.name);
    }
    return out;
  }

  friend bool operator==(const EvaluationSummary&, const EvaluationSummary&) = default;
};

inline SelectivityAssessment assess_summary(const EvaluationSummary& s, double threshold,
                                            Aggregate aggregate) {
  const ModelSummary* t = s.find(s.target);
  if (!t) throw ValidationError("summary has no target model '" + s.target + "'");
  std::vector<double> refs;
  for (const auto& m : s.models) {
    if (m.role == "reference") refs.push_back(m.delta());
  }
  return assess_selectivity(t->delta(), refs, threshold, aggregate);
}

inline RankShift rank_shift(const EvaluationSummary& s) {
  std::map<std::string, double> before;
  std::map<std::string, double> after;
  for (const auto& m : s.models) {
    before[m.name] = m.s_base();
    after[m.name] = m.s_attack();
  }
  return rank_shift(before, after);
}

inline Json summary_to_json(const EvaluationSummary& s) {
  Json j;
  j["label"] = s.label;
  j["target"] = s.target;
  j["item_count"] = s.item_count;
  j["quarantined"] = s.quarantined;
  j["models"] = Json::array();
  for (const auto& m : s.models) {
    j["models"].push_back({{"name", m.name},
                           {"role", m.role},
                           {"items", m.items},
                           {"correct_base", m.correct_base},
                           {"correct_attack", m.correct_attack},
                           {"s_base", m.s_base()},
                           {"s_attack", m.s_attack()},
                           {"delta", m.delta()}});
  }
  j["config"] = s.config;
  return j;
}

inline EvaluationSummary summary_from_json(const Json& j) {
  EvaluationSummary s;
  try {
    s.label = j.value("label", std::string());
    s.target = j.at("target").get<std::string>();
    s.item_count = j.at("item_count").get<std::size_t>();
    s.quarantined = j.value("quarantined", std::size_t{0});
    for (const auto& m : j.at("models")) {
      s.models.push_back({m.at("name").get<std::string>(), m.at("role").get<std::string>(),
                          m.at("items").get<std::size_t>(), m.at("correct_base").get<std::size_t>(),
                          m.at("correct_attack").get<std::size_t>()});
    }
    if (j.contains("config")) s.config = j["config"];
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("summary: ") + e.what());
  }
  return s;
}

inline Json assessment_to_json(const SelectivityAssessment& a) {
  return {{"category", to_string(a.category)},
          {"target_delta", a.target_delta},
          {"reference_deltas", a.reference_deltas},
          {"aggregate", to_string(a.aggregate)},
          {"aggregate_delta", a.aggregate_delta},
          {"gap", a.gap},
          {"threshold", a.threshold}};
}

inline Json rank_shift_to_json(const RankShift& r) {
  Json inv = Json::array();
  for (const auto& [a, b] : r.inversions) inv.push_back({a, b});
  return {{"before", r.before}, {"after", r.after}, {"inversions", inv}};
}

}  // namespace selattack
