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

// Clients for chat-completions-compatible endpoints.
//
//   POST <base>/v1/chat/completions
//     {model, messages, temperature, max_tokens, logprobs, top_logprobs[, seed]}
//     -> {choices: [{message: {content}, logprobs: {content: [{top_logprobs:
//          [{token, logprob}]}]}}]}
//   POST <base>/v1/embeddings   {model, input: [texts]} -> {vectors} | {data}
//   POST <base>/fill            {text, top_k} -> {candidates: [{token, score}]}

#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "selattack/error.hpp"
#include "selattack/oracle.hpp"

namespace selattack {

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
};

// One base URL plus retry, auth and an in-flight bound. Thread-safe.
class HttpEndpoint {
 public:
  HttpEndpoint(const std::string& url, const std::string& api_key_env, std::size_t max_in_flight,
               RetryPolicy retry = {})
      : retry_(retry), slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, max_in_flight))) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw ConfigError("endpoint '" + url + "' is not an http(s) URL");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (!api_key_env.empty()) {
      if (const char* key = std::getenv(api_key_env.c_str())) api_key_ = key;
    }
  }

  Json post(const std::string& path, const Json& body) {
    const std::string payload = body.dump();
    std::string last_error;
    auto backoff = retry_.initial_backoff;
    for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
      slots_.acquire();
      httplib::Result res = [&] {
        httplib::Client client(origin_);
        client.set_connection_timeout(retry_.timeout);
        client.set_read_timeout(retry_.timeout);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        return client.Post(prefix_ + path, headers, payload, "application/json");
      }();
      slots_.release();

      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
      } else if (res->status >= 400) {
        throw OracleError(origin_ + prefix_ + path + " returned HTTP " +
                          std::to_string(res->status) + ": " + res->body.substr(0, 200));
      } else {
        try {
          return Json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw OracleError(origin_ + prefix_ + path + " returned malformed JSON: " + e.what());
        }
      }
      if (attempt < retry_.attempts) {
        std::this_thread::sleep_for(backoff);
        backoff *= 2;
      }
    }
    throw TransportError(origin_ + prefix_ + path + " failed after " +
                         std::to_string(retry_.attempts) + " attempts (" + last_error + ")");
  }

 private:
  RetryPolicy retry_;
  std::counting_semaphore<> slots_;
  std::string origin_;
  std::string prefix_;
  std::string api_key_;
};

class HttpChatModel final : public AnswerModel, public TextGenerator {
 public:
  HttpChatModel(const ModelHandle& handle, RetryPolicy retry = {})
      : handle_(handle),
        endpoint_(handle.endpoint, handle.api_key_env, handle.max_in_flight, retry) {
    if (handle_.model_id.empty()) handle_.model_id = handle_.name;
  }

  // Log-probabilities of the option letters at the first generated position,
  // summed over the spellings "X" and " X".
  std::vector<double> option_logits(const RenderedPrompt& prompt,
                                    const ItemContext& ctx) override {
    Json body = chat_body(prompt.system, prompt.user, 0.0, 1);
    body["logprobs"] = true;
    body["top_logprobs"] = handle_.decoding.top_logprobs;
    const Json res = endpoint_.post("/v1/chat/completions", body);

    const Json* top = nullptr;
    try {
      top = &res.at("choices").at(0).at("logprobs").at("content").at(0).at("top_logprobs");
    } catch (const nlohmann::json::exception&) {
      throw ScoringError("model '" + handle_.name +
                         "' returned no log-probabilities; it only supports letter mode");
    }
    std::vector<std::vector<double>> per_letter(ctx.n_options);
    for (const auto& entry : *top) {
      const std::string token = entry.at("token").get<std::string>();
      const std::string_view bare = token.starts_with(' ') ? std::string_view(token).substr(1)
                                                           : std::string_view(token);
      if (bare.size() != 1) continue;
      const auto idx = letter_index(bare[0]);
      if (!idx || *idx >= ctx.n_options || bare[0] != option_letter(*idx)) continue;
      per_letter[*idx].push_back(entry.at("logprob").get<double>());
    }
    std::vector<double> logits(ctx.n_options);
    for (std::size_t i = 0; i < ctx.n_options; ++i) {
      if (per_letter[i].empty()) {
        throw ScoringError("model '" + handle_.name + "': letter " +
                           std::string(1, option_letter(i)) + " not among the top " +
                           std::to_string(handle_.decoding.top_logprobs) + " log-probabilities");
      }
      logits[i] = log_sum_exp(per_letter[i]);
    }
    return logits;
  }

  std::string complete(const RenderedPrompt& prompt, const ItemContext&) override {
    const Json res = endpoint_.post(
        "/v1/chat/completions",
        chat_body(prompt.system, prompt.user, 0.0, handle_.decoding.max_new_tokens));
    return content_of(res);
  }

  std::string generate(const GenerationRequest& request) override {
    Json body = chat_body(request.system, request.user, request.temperature, request.max_tokens);
    body["seed"] = request.seed;
    return content_of(endpoint_.post("/v1/chat/completions", body));
  }

 private:
  Json chat_body(const std::string& system, const std::string& user, double temperature,
                 int max_tokens) const {
    Json body;
    body["model"] = handle_.model_id;
    body["messages"] = Json::array({{{"role", "system"}, {"content", system}},
                                    {{"role", "user"}, {"content", user}}});
    body["temperature"] = temperature;
    body["max_tokens"] = max_tokens;
    return body;
  }

  std::string content_of(const Json& res) const {
    try {
      const Json& c = res.at("choices").at(0).at("message").at("content");
      return c.is_null() ? std::string() : c.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw OracleError("model '" + handle_.name + "' returned no message content: " + e.what());
    }
  }

  ModelHandle handle_;
  HttpEndpoint endpoint_;
};

class HttpEncoder final : public SentenceEncoder {
 public:
  HttpEncoder(const ModelHandle& handle, RetryPolicy retry = {})
      : model_id_(handle.model_id.empty() ? handle.name : handle.model_id),
        endpoint_(handle.endpoint, handle.api_key_env, handle.max_in_flight, retry) {}

  std::vector<double> encode(std::string_view text) override {
    return encode_batch({std::string(text)}).at(0);
  }

  std::vector<std::vector<double>> encode_batch(const std::vector<std::string>& texts) {
    Json body;
    body["model"] = model_id_;
    body["input"] = texts;
    const Json res = endpoint_.post("/v1/embeddings", body);
    std::vector<std::vector<double>> out;
    try {
      if (res.contains("vectors")) {
        out = res["vectors"].get<std::vector<std::vector<double>>>();
      } else {
        for (const auto& d : res.at("data")) out.push_back(d.at("embedding").get<std::vector<double>>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw OracleError("embedding endpoint returned an unexpected body: " + std::string(e.what()));
    }
    if (out.size() != texts.size()) {
      throw OracleError("embedding endpoint returned " + std::to_string(out.size()) +
                        " vectors for " + std::to_string(texts.size()) + " inputs");
    }
    return out;
  }

 private:
  std::string model_id_;
  HttpEndpoint endpoint_;
};

class HttpMaskFiller final : public MaskFiller {
 public:
  HttpMaskFiller(const ModelHandle& handle, RetryPolicy retry = {})
      : endpoint_(handle.endpoint, handle.api_key_env, handle.max_in_flight, retry) {}

  std::vector<MaskFill> fill(const MaskRequest& request) override {
    Json body;
    body["text"] = request.masked_text;
    body["top_k"] = request.top_k;
    const Json res = endpoint_.post("/fill", body);
    std::vector<MaskFill> out;
    try {
      for (const auto& c : res.at("candidates")) {
        out.push_back({c.at("token").get<std::string>(), c.at("score").get<double>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw OracleError("mask-fill endpoint returned an unexpected body: " + std::string(e.what()));
    }
    return out;
  }

 private:
  HttpEndpoint endpoint_;
};

}  // namespace selattack
