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

// Byte-oriented text helpers shared by every module. Word tokens keep their
// byte offsets into the source string so edits can be replayed exactly.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selattack/error.hpp"

namespace selattack {

// Half-open byte range [begin, end).
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  [[nodiscard]] std::size_t size() const { return end - begin; }
  [[nodiscard]] bool empty() const { return begin == end; }
  friend bool operator==(const Span&, const Span&) = default;
};

inline constexpr std::size_t kMaxOptions = 8;

// Option index 0..7 <-> 'A'..'H'.
inline char option_letter(std::size_t index) {
  if (index >= kMaxOptions) {
    throw ValidationError("option index " + std::to_string(index) +
                          " has no letter (max 8 options)");
  }
  return static_cast<char>('A' + index);
}

inline std::optional<std::size_t> letter_index(char c) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (upper < 'A' || upper >= static_cast<char>('A' + kMaxOptions)) return std::nullopt;
  return static_cast<std::size_t>(upper - 'A');
}

// Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
inline bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) != 0 || u >= 0x80 || c == '\'';
}

inline bool is_space_byte(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

// Word tokens of `text`: maximal runs of word bytes. A leading or trailing
// apostrophe is not part of the word.
inline std::vector<Span> word_spans(std::string_view text) {
  std::vector<Span> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(text[i]) || text[i] == '\'') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_word_byte(text[j])) ++j;
    std::size_t end = j;
    while (end > i + 1 && text[end - 1] == '\'') --end;
    out.push_back({i, end});
    i = j;
  }
  return out;
}

inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& s : word_spans(text)) out.emplace_back(text.substr(s.begin, s.size()));
  return out;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && to_lower(a) == to_lower(b);
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space_byte(s[b])) ++b;
  while (e > b && is_space_byte(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline bool is_alphabetic(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalpha(static_cast<unsigned char>(c)) != 0;
  });
}

inline bool starts_upper(std::string_view s) {
  return !s.empty() && std::isupper(static_cast<unsigned char>(s.front())) != 0;
}

// Copies the capitalisation of `model`'s first letter onto `word`.
inline std::string match_case(std::string_view model, std::string word) {
  if (starts_upper(model) && !word.empty()) {
    word.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(word.front())));
  }
  return word;
}

inline std::string replace_span(std::string_view text, Span span, std::string_view replacement) {
  std::string out;
  out.reserve(text.size() - span.size() + replacement.size());
  out.append(text.substr(0, span.begin));
  out.append(replacement);
  out.append(text.substr(span.end));
  return out;
}

inline bool contains_word(std::string_view text, std::string_view word) {
  const std::string needle = to_lower(word);
  for (const auto& w : words(text)) {
    if (to_lower(w) == needle) return true;
  }
  return false;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                   : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace selattack
