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

// Multiple-choice benchmark items, their perturbed variants, prompt rendering
// and the canonical line-delimited file format.
//
// A perturbed item never stores options or the gold index: both are always
// read from the base item, so an attack cannot touch them.

#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "selattack/error.hpp"
#include "selattack/text.hpp"

namespace selattack {

using Json = nlohmann::ordered_json;

inline constexpr std::string_view kEvaluationSystemPrompt =
    "You are a helpful assistant that answers multiple-choice questions.\n"
    "For each question, choose the single best answer from the provided options (A, B, C, D, "
    "etc.).\n"
    "Respond using only the letter corresponding to your selected answer.";

struct BenchmarkItem {
  std::string id;
  std::string subject;
  std::string question;
  std::vector<std::string> options;
  std::size_t gold = 0;
  std::optional<std::string> system_instruction;

  friend bool operator==(const BenchmarkItem&, const BenchmarkItem&) = default;
};

struct BenchmarkSet {
  std::string name;
  std::string split;
  std::vector<BenchmarkItem> items;

  [[nodiscard]] const BenchmarkItem* find(std::string_view id) const {
    for (const auto& item : items) {
      if (item.id == id) return &item;
    }
    return nullptr;
  }
  friend bool operator==(const BenchmarkSet&, const BenchmarkSet&) = default;
};

enum class Field { kQuestion, kSystemInstruction };

enum class EditKind {
  kCharSwap,
  kCharInsert,
  kCharDelete,
  kCharSubstitute,
  kWordEmbedSub,
  kWordMaskfillSub,
  kWordDelete,
  kParaphrase,
};

inline std::string_view to_string(Field f) {
  return f == Field::kQuestion ? "question" : "system_instruction";
}

inline Field parse_field(std::string_view s) {
  if (s == "question") return Field::kQuestion;
  if (s == "system_instruction") return Field::kSystemInstruction;
  throw ParseError("unknown edit field '" + std::string(s) + "'");
}

inline std::string_view to_string(EditKind k) {
  switch (k) {
    case EditKind::kCharSwap: return "char-swap";
    case EditKind::kCharInsert: return "char-insert";
    case EditKind::kCharDelete: return "char-delete";
    case EditKind::kCharSubstitute: return "char-substitute";
    case EditKind::kWordEmbedSub: return "word-embed-sub";
    case EditKind::kWordMaskfillSub: return "word-maskfill-sub";
    case EditKind::kWordDelete: return "word-delete";
    case EditKind::kParaphrase: return "paraphrase";
  }
  return "?";
}

inline EditKind parse_edit_kind(std::string_view s) {
  for (auto k : {EditKind::kCharSwap, EditKind::kCharInsert, EditKind::kCharDelete,
                 EditKind::kCharSubstitute, EditKind::kWordEmbedSub, EditKind::kWordMaskfillSub,
                 EditKind::kWordDelete, EditKind::kParaphrase}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown edit kind '" + std::string(s) + "'");
}

inline bool is_word_substitution(EditKind k) {
  return k == EditKind::kWordEmbedSub || k == EditKind::kWordMaskfillSub;
}

inline bool is_char_edit(EditKind k) {
  return k == EditKind::kCharSwap || k == EditKind::kCharInsert || k == EditKind::kCharDelete ||
         k == EditKind::kCharSubstitute;
}

// One replayable edit: the bytes `before` at `span` of `field` become `after`.
// Spans are relative to the field text at the moment the edit is applied.
struct Edit {
  EditKind kind = EditKind::kCharSwap;
  Field field = Field::kQuestion;
  Span span;
  std::string before;
  std::string after;

  friend bool operator==(const Edit&, const Edit&) = default;
};

inline std::string apply_edit(std::string_view text, const Edit& e) {
  if (e.span.end > text.size() || e.span.begin > e.span.end ||
      text.substr(e.span.begin, e.span.size()) != e.before) {
    throw ValidationError("edit " + std::string(to_string(e.kind)) + " at [" +
                          std::to_string(e.span.begin) + "," + std::to_string(e.span.end) +
                          ") does not match the text it is applied to");
  }
  return replace_span(text, e.span, e.after);
}

struct PerturbedItem {
  std::string base_id;
  std::string question;
  std::optional<std::string> system_instruction;
  std::vector<Edit> edit_log;

  friend bool operator==(const PerturbedItem&, const PerturbedItem&) = default;
};

// Starts an unedited perturbation of `item`.
inline PerturbedItem identity_perturbation(const BenchmarkItem& item) {
  return {item.id, item.question, item.system_instruction, {}};
}

inline std::string& field_text(PerturbedItem& p, Field f) {
  if (f == Field::kQuestion) return p.question;
  if (!p.system_instruction) p.system_instruction.emplace();
  return *p.system_instruction;
}

inline std::string_view field_text(const PerturbedItem& p, Field f) {
  if (f == Field::kQuestion) return p.question;
  return p.system_instruction ? std::string_view(*p.system_instruction) : std::string_view();
}

// Applies `e` and appends it to the log.
inline void commit_edit(PerturbedItem& p, const Edit& e) {
  std::string& text = field_text(p, e.field);
  text = apply_edit(text, e);
  p.edit_log.push_back(e);
}

// Rebuilds a perturbed item from the base item and an edit log.
inline PerturbedItem replay_edits(const BenchmarkItem& base, const std::vector<Edit>& log) {
  PerturbedItem p = identity_perturbation(base);
  for (const auto& e : log) commit_edit(p, e);
  return p;
}

// ---------------------------------------------------------------------------
// Prompt rendering

struct PromptTemplate {
  std::string system = "{system}";
  std::string user = "{question}\n{options}\nAnswer:";
  // Used for {system} when neither the item nor its perturbation carries one.
  std::string default_system = std::string(kEvaluationSystemPrompt);

  friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

struct RenderedPrompt {
  std::string system;
  std::string user;

  [[nodiscard]] std::string text() const { return system + "\n\n" + user; }
  friend bool operator==(const RenderedPrompt&, const RenderedPrompt&) = default;
};

inline std::string render_options(const BenchmarkItem& item) {
  std::string out;
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    if (i) out.push_back('\n');
    out.push_back(option_letter(i));
    out.append(". ");
    out.append(item.options[i]);
  }
  return out;
}

namespace detail {

inline std::string substitute_placeholders(std::string_view tpl,
                                           const std::map<std::string, std::string>& values,
                                           std::set<std::string>& seen) {
  std::string out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    if (tpl[i] == '{') {
      const auto close = tpl.find('}', i + 1);
      if (close == std::string_view::npos) {
        throw ValidationError("prompt template has an unterminated '{'");
      }
      const std::string name(tpl.substr(i + 1, close - i - 1));
      const auto it = values.find(name);
      if (it == values.end()) {
        throw ValidationError("prompt template placeholder {" + name + "} cannot be resolved");
      }
      out.append(it->second);
      seen.insert(name);
      i = close + 1;
    } else {
      out.push_back(tpl[i++]);
    }
  }
  return out;
}

}  // namespace detail

inline void validate_template(const PromptTemplate& tpl) {
  std::set<std::string> seen;
  const std::map<std::string, std::string> dummy{{"system", ""}, {"question", ""}, {"options", ""}};
  detail::substitute_placeholders(tpl.system, dummy, seen);
  detail::substitute_placeholders(tpl.user, dummy, seen);
  for (const char* required : {"system", "question", "options"}) {
    if (!seen.count(required)) {
      throw ValidationError(std::string("prompt template is missing {") + required + "}");
    }
  }
}

inline RenderedPrompt render_prompt(const BenchmarkItem& item, const PerturbedItem* perturbed,
                                    const PromptTemplate& tpl) {
  validate_template(tpl);
  if (perturbed && perturbed->base_id != item.id) {
    throw ValidationError("perturbation of '" + perturbed->base_id + "' rendered against item '" +
                          item.id + "'");
  }
  const std::optional<std::string>& sys =
      perturbed ? perturbed->system_instruction : item.system_instruction;
  const std::map<std::string, std::string> values{
      {"system", sys ? *sys : tpl.default_system},
      {"question", perturbed ? perturbed->question : item.question},
      {"options", render_options(item)},
  };
  std::set<std::string> seen;
  return {detail::substitute_placeholders(tpl.system, values, seen),
          detail::substitute_placeholders(tpl.user, values, seen)};
}

// ---------------------------------------------------------------------------
// Validation and file formats

inline void validate_item(const BenchmarkItem& item, std::string_view where) {
  auto fail = [&](const std::string& what) {
    throw ValidationError(std::string(where) + " (id '" + item.id + "'): " + what);
  };
  if (item.id.empty()) fail("empty id");
  if (item.options.size() < 2 || item.options.size() > kMaxOptions) {
    fail("needs 2 to 8 options, has " + std::to_string(item.options.size()));
  }
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    if (item.options[i].empty()) fail(std::string("option ") + option_letter(i) + " is empty");
  }
  if (item.gold >= item.options.size()) {
    fail("gold index " + std::to_string(item.gold) + " out of range for " +
         std::to_string(item.options.size()) + " options");
  }
}

inline void validate_set(const BenchmarkSet& set) {
  if (set.items.empty()) throw ValidationError("empty benchmark");
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < set.items.size(); ++i) {
    validate_item(set.items[i], "item " + std::to_string(i + 1));
    if (!ids.insert(set.items[i].id).second) {
      throw ValidationError("item " + std::to_string(i + 1) + ": duplicate id '" +
                            set.items[i].id + "'");
    }
  }
}

inline Json item_to_json(const BenchmarkItem& item) {
  Json j;
  j["id"] = item.id;
  j["subject"] = item.subject;
  j["question"] = item.question;
  j["options"] = item.options;
  j["answer"] = std::string(1, option_letter(item.gold));
  if (item.system_instruction) j["system_instruction"] = *item.system_instruction;
  return j;
}

inline std::size_t parse_answer_letter(const Json& answer, std::size_t n_options,
                                       const std::string& where) {
  std::size_t gold = 0;
  if (answer.is_string()) {
    const std::string s = answer.get<std::string>();
    const auto idx = s.size() == 1 ? letter_index(s[0]) : std::nullopt;
    if (!idx) throw ParseError(where + ": answer '" + s + "' is not a letter A-H");
    gold = *idx;
  } else if (answer.is_number_unsigned()) {
    gold = answer.get<std::size_t>();
  } else {
    throw ParseError(where + ": answer must be a letter");
  }
  if (gold >= n_options) {
    throw ValidationError(where + ": answer '" + std::string(1, option_letter(std::min(gold, kMaxOptions - 1))) +
                          "' out of range for " + std::to_string(n_options) + " options");
  }
  return gold;
}

inline BenchmarkItem item_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": record is not an object");
  BenchmarkItem item;
  try {
    item.id = j.at("id").get<std::string>();
    item.subject = j.value("subject", std::string());
    item.question = j.at("question").get<std::string>();
    item.options = j.at("options").get<std::vector<std::string>>();
    if (j.contains("system_instruction") && !j["system_instruction"].is_null()) {
      item.system_instruction = j["system_instruction"].get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  const std::string named = where + " (id '" + item.id + "')";
  if (!j.contains("answer")) throw ParseError(named + ": missing answer");
  item.gold = parse_answer_letter(j["answer"], item.options.size(), named);
  return item;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Parses line-delimited JSON; blank lines are skipped. `visit` receives the
// parsed value and a 1-based line number.
template <typename Visitor>
void for_each_json_line(std::string_view contents, const std::string& source, Visitor&& visit) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    std::string_view line = contents.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(source + " line " + std::to_string(line_no) + ": " + e.what());
    }
    visit(j, line_no);
  }
}

inline std::vector<BenchmarkItem> parse_jsonl_items(std::string_view contents,
                                                    const std::string& source) {
  std::vector<BenchmarkItem> items;
  for_each_json_line(contents, source, [&](const Json& j, std::size_t line_no) {
    items.push_back(item_from_json(j, source + " line " + std::to_string(line_no)));
  });
  return items;
}

namespace detail {

// RFC 4180 CSV: quoted fields, doubled quotes, embedded newlines, CRLF.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view s,
                                                       const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < s.size() && s[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < s.size() && s[i + 1] == '\n') {
      // handled by the '\n'
    } else if (c == '\n') {
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw ParseError(source + ": unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string mmlu_subject(const std::filesystem::path& file) {
  std::string stem = file.stem().string();
  for (std::string_view suffix : {"_dev", "_test", "_val"}) {
    if (stem.size() > suffix.size() && stem.ends_with(suffix)) {
      return stem.substr(0, stem.size() - suffix.size());
    }
  }
  return stem;
}

inline std::vector<BenchmarkItem> parse_mmlu_csv(std::string_view contents,
                                                 const std::filesystem::path& file) {
  const std::string source = file.filename().string();
  const std::string subject = mmlu_subject(file);
  std::vector<BenchmarkItem> items;
  const auto rows = parse_csv(contents, source);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::string where = source + " row " + std::to_string(r + 1);
    if (row.size() != 6) {
      throw ParseError(where + ": expected 6 columns (question, A, B, C, D, answer), got " +
                       std::to_string(row.size()));
    }
    BenchmarkItem item;
    item.id = file.stem().string() + "-" + std::to_string(r + 1);
    item.subject = subject;
    item.question = row[0];
    item.options.assign(row.begin() + 1, row.begin() + 5);
    item.gold = parse_answer_letter(Json(std::string(trim(row[5]))), 4, where);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace detail

enum class BenchmarkFormat { kJsonl, kMmluCsv };

inline BenchmarkFormat parse_benchmark_format(std::string_view s) {
  if (s == "jsonl") return BenchmarkFormat::kJsonl;
  if (s == "mmlu-csv") return BenchmarkFormat::kMmluCsv;
  throw ConfigError("unknown benchmark format '" + std::string(s) + "' (jsonl, mmlu-csv)");
}

// Loads and validates a benchmark. For mmlu-csv, `path` may be a single file
// or a directory whose *.csv files are read in name order.
inline BenchmarkSet load_benchmark(const std::filesystem::path& path, BenchmarkFormat format) {
  namespace fs = std::filesystem;
  BenchmarkSet set;
  set.name = path.stem().string();
  if (format == BenchmarkFormat::kJsonl) {
    set.split = "custom";
    set.items = parse_jsonl_items(read_file(path), path.filename().string());
  } else {
    set.split = "dev";
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.path().extension() == ".csv") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
    } else {
      files.push_back(path);
    }
    for (const auto& f : files) {
      auto part = detail::parse_mmlu_csv(read_file(f), f);
      set.items.insert(set.items.end(), std::make_move_iterator(part.begin()),
                       std::make_move_iterator(part.end()));
    }
  }
  validate_set(set);
  return set;
}

inline std::string serialize_items(const std::vector<BenchmarkItem>& items) {
  std::string out;
  for (const auto& item : items) {
    out += item_to_json(item).dump();
    out.push_back('\n');
  }
  return out;
}

inline void save_benchmark(const BenchmarkSet& set, const std::filesystem::path& path) {
  write_file(path, serialize_items(set.items));
}

inline Json edit_to_json(const Edit& e) {
  Json j;
  j["kind"] = to_string(e.kind);
  j["field"] = to_string(e.field);
  j["span"] = {e.span.begin, e.span.end};
  j["before"] = e.before;
  j["after"] = e.after;
  return j;
}

inline Edit edit_from_json(const Json& j) {
  Edit e;
  e.kind = parse_edit_kind(j.at("kind").get<std::string>());
  e.field = parse_field(j.at("field").get<std::string>());
  e.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
  e.before = j.at("before").get<std::string>();
  e.after = j.at("after").get<std::string>();
  return e;
}

inline Json perturbed_to_json(const PerturbedItem& p) {
  Json j;
  j["base_id"] = p.base_id;
  j["question"] = p.question;
  j["system_instruction"] = p.system_instruction ? Json(*p.system_instruction) : Json(nullptr);
  j["edit_log"] = Json::array();
  for (const auto& e : p.edit_log) j["edit_log"].push_back(edit_to_json(e));
  return j;
}

inline PerturbedItem perturbed_from_json(const Json& j) {
  PerturbedItem p;
  p.base_id = j.at("base_id").get<std::string>();
  p.question = j.at("question").get<std::string>();
  if (j.contains("system_instruction") && !j["system_instruction"].is_null()) {
    p.system_instruction = j["system_instruction"].get<std::string>();
  }
  for (const auto& e : j.at("edit_log")) p.edit_log.push_back(edit_from_json(e));
  return p;
}

inline std::filesystem::path provenance_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".provenance.jsonl");
}

// Writes `set` with each perturbation's question/instruction substituted, and a
// provenance sidecar with one line per perturbed item. `header`, when not null,
// is written as the first sidecar line (run configuration, tool version).
inline void export_perturbed_dataset(const BenchmarkSet& set,
                                     const std::vector<PerturbedItem>& perturbations,
                                     const std::filesystem::path& path,
                                     const Json& header = Json()) {
  std::map<std::string, const PerturbedItem*> by_id;
  for (const auto& p : perturbations) {
    const BenchmarkItem* base = set.find(p.base_id);
    if (!base) throw ValidationError("perturbation references unknown item '" + p.base_id + "'");
    if (replay_edits(*base, p.edit_log) != p) {
      throw ValidationError("edit log of '" + p.base_id + "' does not replay to its text");
    }
    by_id[p.base_id] = &p;
  }
  std::vector<BenchmarkItem> out = set.items;
  std::string provenance;
  if (!header.is_null()) provenance += header.dump() + "\n";
  for (auto& item : out) {
    const auto it = by_id.find(item.id);
    if (it == by_id.end()) continue;
    item.question = it->second->question;
    item.system_instruction = it->second->system_instruction;
    provenance += perturbed_to_json(*it->second).dump() + "\n";
  }
  write_file(path, serialize_items(out));
  write_file(provenance_path(path), provenance);
}

}  // namespace selattack
