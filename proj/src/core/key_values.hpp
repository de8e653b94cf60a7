/* Copyright 2026 The Tandem Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>

#include "core/tensor.hpp"

namespace tandem {

/// Ordered "key=value" settings. Text form: one pair per line, '#' starts a
/// comment, surrounding whitespace is ignored.
using KeyValues = std::map<std::string, std::string>;

/// ConfigError naming the offending line.
KeyValues parse_key_values(std::string_view text);
std::string format_key_values(const KeyValues& kv);

/// Typed lookups that remember which keys were consumed, so leftovers can be
/// reported as unknown.
class KeyValueReader {
 public:
  explicit KeyValueReader(const KeyValues& kv) : kv_(kv) {}

  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  Real get_real(const std::string& key, Real fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::string get_string(const std::string& key, const std::string& fallback);
  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  /// ConfigError listing keys never read.
  void reject_unknown() const;

 private:
  const std::string* find(const std::string& key);

  const KeyValues& kv_;
  std::set<std::string> used_;
};

std::string format_real(Real v);

}  // namespace tandem
