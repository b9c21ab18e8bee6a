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

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <string>
#include <string_view>

#include "selattack/error.hpp"

namespace selattack {

using Sha256 = std::array<unsigned char, 32>;

// SHA-256 over the given parts, each followed by a 0x1f separator so that
// ("ab","c") and ("a","bc") hash differently.
inline Sha256 sha256(std::initializer_list<std::string_view> parts) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                              &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest init failed");
  }
  static constexpr char kSep = '\x1f';
  for (auto part : parts) {
    EVP_DigestUpdate(ctx.get(), part.data(), part.size());
    EVP_DigestUpdate(ctx.get(), &kSep, 1);
  }
  Sha256 out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), out.data(), &len);
  return out;
}

inline std::string to_hex(const Sha256& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(d.size() * 2);
  for (unsigned char b : d) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

inline std::string digest_hex(std::initializer_list<std::string_view> parts) {
  return to_hex(sha256(parts));
}

// First 8 bytes of the SHA-256, big-endian. Stable across platforms and runs.
inline std::uint64_t stable_hash(std::string_view s) {
  const auto d = sha256({s});
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[static_cast<std::size_t>(i)];
  return v;
}

// Uniform in [0, 1) derived from stable_hash.
inline double stable_unit(std::string_view s) {
  return static_cast<double>(stable_hash(s) >> 11) * 0x1.0p-53;
}

}  // namespace selattack
