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

// Report rendering: JSON, CSV, Markdown tables and an SVG bar chart.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "selattack/search.hpp"
#include "selattack/selectivity.hpp"

namespace selattack {

enum class ReportFormat { kJson, kCsv, kMarkdown, kSvg };

inline std::string_view to_string(ReportFormat f) {
  switch (f) {
    case ReportFormat::kJson: return "json";
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kMarkdown: return "markdown";
    case ReportFormat::kSvg: return "svg";
  }
  return "?";
}

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::kJson;
  if (s == "csv") return ReportFormat::kCsv;
  if (s == "markdown" || s == "md") return ReportFormat::kMarkdown;
  if (s == "svg") return ReportFormat::kSvg;
  throw ConfigError("unknown report format '" + std::string(s) + "' (json, csv, markdown, svg)");
}

inline std::string_view report_extension(ReportFormat f) {
  switch (f) {
    case ReportFormat::kJson: return ".json";
    case ReportFormat::kCsv: return ".csv";
    case ReportFormat::kMarkdown: return ".md";
    case ReportFormat::kSvg: return ".svg";
  }
  return "";
}

// Everything one report describes.
struct ReportBundle {
  EvaluationSummary summary;
  std::optional<SelectivityAssessment> assessment;
  std::optional<RankShift> ranks;
  std::vector<AttackRecord> records;
};

inline Json render_json(const ReportBundle& b) {
  Json j;
  j["tool"] = "selattack";
  j["version"] = kVersion;
  j["summary"] = summary_to_json(b.summary);
  j["assessment"] = b.assessment ? assessment_to_json(*b.assessment) : Json(nullptr);
  j["rank_shift"] = b.ranks ? rank_shift_to_json(*b.ranks) : Json(nullptr);
  // Final texts are every model's evaluation input, including items left
  // unperturbed.
  j["conventions"] = {{"post_attack_text", "final text of every item, original when not attacked"},
                      {"cost", "lower is better"},
                      {"quarantined_items", "excluded from accuracy denominators"}};
  Json status_counts = Json::object();
  for (const auto& r : b.records) {
    const std::string k(to_string(r.status));
    status_counts[k] = status_counts.value(k, 0) + 1;
  }
  j["status_counts"] = status_counts;
  return j;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kSummaryCsvHeader =
    "label,target,item_count,quarantined,model,role,items,correct_base,correct_attack,s_base,"
    "s_attack,delta";

namespace detail {

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string fixed6(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace detail

// One row per model. Counts are authoritative; the ratio columns are derived.
inline std::string render_csv(const EvaluationSummary& s) {
  std::string out(kSummaryCsvHeader);
  out.push_back('\n');
  for (const auto& m : s.models) {
    out += detail::csv_field(s.label) + "," + detail::csv_field(s.target) + "," +
           std::to_string(s.item_count) + "," + std::to_string(s.quarantined) + "," +
           detail::csv_field(m.name) + "," + detail::csv_field(m.role) + "," +
           std::to_string(m.items) + "," + std::to_string(m.correct_base) + "," +
           std::to_string(m.correct_attack) + "," + detail::fixed6(m.s_base()) + "," +
           detail::fixed6(m.s_attack()) + "," + detail::fixed6(m.delta()) + "\n";
  }
  return out;
}

// Inverse of render_csv, without the config echo. An empty table yields an
// empty summary.
inline EvaluationSummary parse_summary_csv(std::string_view csv) {
  const auto rows = detail::parse_csv(csv, "summary csv");
  if (rows.empty() || rows[0].size() != 12) throw ParseError("summary csv: bad header");
  EvaluationSummary s;
  auto num = [](const std::string& x, std::size_t row) -> std::size_t {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(x, &pos);
      if (pos != x.size()) throw std::invalid_argument(x);
      return v;
    } catch (const std::exception&) {
      throw ParseError("summary csv row " + std::to_string(row + 1) + ": '" + x +
                       "' is not a count");
    }
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 12) throw ParseError("summary csv row " + std::to_string(r + 1) + ": 12 columns expected");
    s.label = row[0];
    s.target = row[1];
    s.item_count = num(row[2], r);
    s.quarantined = num(row[3], r);
    s.models.push_back({row[4], row[5], num(row[6], r), num(row[7], r), num(row[8], r)});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Markdown

// Rows are models, the first column is baseline accuracy and each summary
// adds a column of post-attack accuracy with the change as a subscript. The
// target of each column is marked with a dagger.
inline std::string render_markdown(const std::vector<EvaluationSummary>& runs) {
  std::vector<std::string> models;
  for (const auto& run : runs) {
    for (const auto& m : run.models) {
      if (std::find(models.begin(), models.end(), m.name) == models.end()) models.push_back(m.name);
    }
  }
  std::string out = "| Model | Before |";
  std::string rule = "|---|---|";
  for (const auto& run : runs) {
    out += " " + (run.label.empty() ? std::string("after") : run.label) + " |";
    rule += "---|";
  }
  out += "\n" + rule + "\n";
  for (const auto& name : models) {
    const ModelSummary* first = nullptr;
    for (const auto& run : runs) {
      if ((first = run.find(name))) break;
    }
    out += "| " + name + " | " + format_accuracy(first->s_base()) + " |";
    for (const auto& run : runs) {
      const ModelSummary* m = run.find(name);
      if (!m) {
        out += " - |";
        continue;
      }
      out += " " + format_accuracy(m->s_attack()) + "<sub>" + format_delta(m->delta()) + "</sub>";
      if (run.target == name) out += " †";
      out += " |";
    }
    out += "\n";
  }
  return out;
}

inline std::string render_markdown(const ReportBundle& b) {
  std::string out = render_markdown(std::vector<EvaluationSummary>{b.summary});
  out += "\n† target model.";
  if (b.summary.quarantined) {
    out += " " + std::to_string(b.summary.quarantined) + " item(s) quarantined and excluded.";
  }
  out += "\n";
  if (b.assessment) {
    const auto& a = *b.assessment;
    out += "\nSelectivity: **" + std::string(to_string(a.category)) + "** (gap " +
           format_delta(a.gap) + ", threshold " + format_accuracy(a.threshold) + ", " +
           std::string(to_string(a.aggregate)) + " of reference changes)\n";
  }
  if (b.ranks) {
    out += "\nRanking before: ";
    for (std::size_t i = 0; i < b.ranks->before.size(); ++i) {
      out += (i ? " > " : "") + b.ranks->before[i];
    }
    out += "\nRanking after: ";
    for (std::size_t i = 0; i < b.ranks->after.size(); ++i) {
      out += (i ? " > " : "") + b.ranks->after[i];
    }
    out += "\nInversions: ";
    if (b.ranks->inversions.empty()) out += "none";
    for (std::size_t i = 0; i < b.ranks->inversions.size(); ++i) {
      out += (i ? ", " : "") + std::string("(") + b.ranks->inversions[i].first + ", " +
             b.ranks->inversions[i].second + ")";
    }
    out += "\n";
  }
  out += "\n<!-- selattack " + std::string(kVersion) + " config: " + b.summary.config.dump() +
         " -->\n";
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", x);
  return buf;
}

}  // namespace detail

// Grouped bars of the accuracy change per model, one group per summary.
inline std::string render_svg(const std::vector<EvaluationSummary>& runs, const Json& config = Json()) {
  const double width = 640.0;
  const double top = 30.0;
  const double bottom = 260.0;
  const double mid = (top + bottom) / 2.0;
  const double half = (bottom - top) / 2.0;
  double extent = 0.05;
  std::size_t bars = 0;
  for (const auto& r : runs) {
    for (const auto& m : r.models) {
      extent = std::max(extent, std::abs(m.delta()));
      ++bars;
    }
  }
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\" "
                    "viewBox=\"0 0 640 320\">\n";
  out += "<metadata>selattack " + std::string(kVersion) + " " +
         detail::xml_escape(config.is_null() ? "{}" : config.dump()) + "</metadata>\n";
  out += "<text x=\"320\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">Accuracy change per model</text>\n";
  out += "<line x1=\"40\" y1=\"" + detail::num(mid) + "\" x2=\"" + detail::num(width - 20) +
         "\" y2=\"" + detail::num(mid) + "\" stroke=\"black\"/>\n";
  if (bars > 0) {
    const double slot = (width - 60.0) / static_cast<double>(bars + runs.size());
    double x = 40.0 + slot / 2.0;
    static const char* const kColors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee"};
    for (std::size_t g = 0; g < runs.size(); ++g) {
      for (std::size_t i = 0; i < runs[g].models.size(); ++i) {
        const auto& m = runs[g].models[i];
        const double d = m.delta();
        const double h = std::abs(d) / extent * half;
        const double y = d >= 0 ? mid - h : mid;
        out += "<rect x=\"" + detail::num(x) + "\" y=\"" + detail::num(y) + "\" width=\"" +
               detail::num(slot * 0.8) + "\" height=\"" + detail::num(h) + "\" fill=\"" +
               kColors[i % 5] + "\"><title>" + detail::xml_escape(m.name) + " " +
               format_delta(d) + "</title></rect>\n";
        out += "<text x=\"" + detail::num(x + slot * 0.4) + "\" y=\"" +
               detail::num(bottom + 14) + "\" text-anchor=\"middle\" font-size=\"9\">" +
               detail::xml_escape(m.name) + (runs[g].target == m.name ? " †" : "") +
               "</text>\n";
        x += slot;
      }
      out += "<text x=\"" + detail::num(x - slot * runs[g].models.size() / 2.0) + "\" y=\"" +
             detail::num(bottom + 30) + "\" text-anchor=\"middle\" font-size=\"10\">" +
             detail::xml_escape(runs[g].label) + "</text>\n";
      x += slot;
    }
  }
  out += "</svg>\n";
  return out;
}

inline std::string render_report(const ReportBundle& b, ReportFormat f) {
  switch (f) {
    case ReportFormat::kJson: return render_json(b).dump(2) + "\n";
    case ReportFormat::kCsv: return render_csv(b.summary);
    case ReportFormat::kMarkdown: return render_markdown(b);
    case ReportFormat::kSvg: return render_svg({b.summary}, b.summary.config);
  }
  return "";
}

// Writes <stem>.{json,csv,md,svg} under `dir`; returns the paths written.
inline std::vector<std::filesystem::path> write_reports(const ReportBundle& b,
                                                        const std::filesystem::path& dir,
                                                        const std::string& stem = "report") {
  std::vector<std::filesystem::path> paths;
  for (auto f : {ReportFormat::kJson, ReportFormat::kCsv, ReportFormat::kMarkdown, ReportFormat::kSvg}) {
    const auto p = dir / (stem + std::string(report_extension(f)));
    write_file(p, render_report(b, f));
    paths.push_back(p);
  }
  return paths;
}

}  // namespace selattack
