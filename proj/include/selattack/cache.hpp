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

#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "selattack/benchmark.hpp"
#include "selattack/log.hpp"
#include "selattack/oracle.hpp"

namespace selattack {

// Cache key for one model query. The template hash makes prompt-template
// changes invalidate earlier entries.
inline std::string verdict_cache_key(std::string_view model_name, ScoreMode mode,
                                     const PromptTemplate& tpl, const RenderedPrompt& prompt,
                                     const std::optional<ItemContext>& ctx) {
  const std::string tpl_hash = digest_hex({tpl.system, tpl.user, tpl.default_system});
  std::string ctx_part;
  if (ctx) ctx_part = std::to_string(ctx->n_options) + "/" + std::to_string(ctx->gold);
  return digest_hex({model_name, to_string(mode), tpl_hash, prompt.system, prompt.user, ctx_part});
}

// Content-addressed verdict store backed by an append-only JSONL file.
// Readers share a lock; writers are serialized in-process and across
// processes (flock). The last well-formed entry for a key wins.
class VerdictCache {
 public:
  // In-memory only.
  VerdictCache() = default;

  explicit VerdictCache(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::unique_lock lock(mutex_);
    refresh_locked();
  }

  VerdictCache(const VerdictCache&) = delete;
  VerdictCache& operator=(const VerdictCache&) = delete;

  std::optional<Verdict> get(const std::string& key) {
    {
      std::shared_lock lock(mutex_);
      if (auto it = entries_.find(key); it != entries_.end()) return it->second;
      if (path_.empty()) return std::nullopt;
    }
    // Another process may have appended since we last looked.
    std::unique_lock lock(mutex_);
    refresh_locked();
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  void put(const std::string& key, const Verdict& verdict) {
    std::unique_lock lock(mutex_);
    entries_[key] = verdict;
    if (path_.empty()) return;
    Json line;
    line["key"] = key;
    line["verdict"] = verdict_to_json(verdict);
    append_line(line.dump() + "\n");
  }

  [[nodiscard]] std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  void append_line(const std::string& line) {
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw IoError("cannot open cache '" + path_.string() + "' for append");
    ::flock(fd, LOCK_EX);
    const char* p = line.data();
    std::size_t left = line.size();
    bool ok = true;
    while (left > 0) {
      const ssize_t n = ::write(fd, p, left);
      if (n <= 0) {
        ok = false;
        break;
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    ::flock(fd, LOCK_UN);
    ::close(fd);
    if (!ok) throw IoError("short write to cache '" + path_.string() + "'");
  }

  void refresh_locked() {
    if (path_.empty() || !std::filesystem::exists(path_)) return;
    const int fd = ::open(path_.c_str(), O_RDONLY);
    if (fd < 0) return;
    ::flock(fd, LOCK_SH);
    std::string data;
    if (::lseek(fd, static_cast<off_t>(offset_), SEEK_SET) >= 0) {
      char buf[1 << 16];
      ssize_t n = 0;
      while ((n = ::read(fd, buf, sizeof buf)) > 0) data.append(buf, static_cast<std::size_t>(n));
    }
    ::flock(fd, LOCK_UN);
    ::close(fd);

    // Only consume complete lines; a partial tail is re-read next time.
    const auto last_nl = data.rfind('\n');
    if (last_nl == std::string::npos) return;
    std::size_t start = 0;
    while (start <= last_nl) {
      const auto nl = data.find('\n', start);
      const std::string_view line(data.data() + start, nl - start);
      ++line_no_;
      start = nl + 1;
      if (trim(line).empty()) continue;
      try {
        const Json j = Json::parse(line);
        entries_[j.at("key").get<std::string>()] = verdict_from_json(j.at("verdict"));
      } catch (const std::exception& e) {
        warn("cache '" + path_.string() + "' line " + std::to_string(line_no_) +
             " is corrupt and will be ignored: " + e.what());
      }
    }
    offset_ += last_nl + 1;
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Verdict> entries_;
  std::size_t offset_ = 0;
  std::size_t line_no_ = 0;
};

// Renders prompts, queries an AnswerModel in one scoring mode and memoizes the
// verdicts. Safe for concurrent use when the model is.
class Evaluator {
 public:
  Evaluator(std::string name, std::shared_ptr<AnswerModel> model, ScoreMode mode,
            PromptTemplate tpl, std::shared_ptr<VerdictCache> cache = nullptr)
      : name_(std::move(name)),
        model_(std::move(model)),
        mode_(mode),
        tpl_(std::move(tpl)),
        cache_(std::move(cache)) {
    validate_template(tpl_);
  }

  Verdict evaluate(const BenchmarkItem& item, const PerturbedItem* perturbed = nullptr) {
    const RenderedPrompt prompt = render_prompt(item, perturbed, tpl_);
    const ItemContext ctx{item.options.size(), item.gold};
    std::string key;
    if (cache_) {
      key = verdict_cache_key(name_, mode_, tpl_, prompt,
                              model_->reads_context() ? std::optional(ctx) : std::nullopt);
      if (auto hit = cache_->get(key)) {
        hit->item_id = item.id;
        hit->correct = hit->letter && *hit->letter == item.gold;
        return *hit;
      }
    }
    model_calls_.fetch_add(1, std::memory_order_relaxed);
    Verdict v;
    v.item_id = item.id;
    v.model = name_;
    if (mode_ == ScoreMode::kLogprob) {
      v.distribution = score_options(*model_, prompt, ctx);
      v.letter = v.distribution->chosen;
    } else {
      auto answer = answer_letter(*model_, prompt, ctx);
      v.letter = answer.letter;
      v.raw_text = std::move(answer.raw);
    }
    v.correct = v.letter && *v.letter == item.gold;
    if (cache_) cache_->put(key, v);
    return v;
  }

  Verdict evaluate(const BenchmarkItem& item, const PerturbedItem& perturbed) {
    return evaluate(item, &perturbed);
  }

  [[nodiscard]] const std::string& name() const { return name_; }
  [[nodiscard]] ScoreMode mode() const { return mode_; }
  [[nodiscard]] const PromptTemplate& prompt_template() const { return tpl_; }
  // Queries that reached the model (cache misses).
  [[nodiscard]] std::size_t model_calls() const { return model_calls_.load(); }

 private:
  std::string name_;
  std::shared_ptr<AnswerModel> model_;
  ScoreMode mode_;
  PromptTemplate tpl_;
  std::shared_ptr<VerdictCache> cache_;
  std::atomic<std::size_t> model_calls_{0};
};

// Distribution used for goal scoring. Letter-mode verdicts become one-hot;
// INVALID puts no mass on any option.
inline std::vector<double> verdict_probs(const Verdict& v, std::size_t n_options) {
  if (v.distribution) return v.distribution->probs;
  std::vector<double> p(n_options, 0.0);
  if (v.letter && *v.letter < n_options) p[*v.letter] = 1.0;
  return p;
}

}  // namespace selattack
