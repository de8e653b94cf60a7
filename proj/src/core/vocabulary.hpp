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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tandem {

using TokenId = std::uint32_t;

/// Lowercases and splits on whitespace and punctuation; punctuation is dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Dense token <-> index map. Indices 0..4 are reserved markers; corpus words
/// come out of tokenize() as [a-z0-9]+ so they can never collide with them.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kSentenceEnd = 2;
  static constexpr TokenId kBos = 3;
  static constexpr TokenId kEos = 4;
  static constexpr std::size_t kReserved = 5;

  Vocabulary();

  /// Indexes every word seen at least `min_frequency` times, in order of first
  /// appearance.
  static Vocabulary build(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_frequency = 1);

  TokenId add(const std::string& word);
  /// kUnk for unknown words.
  TokenId index_of(std::string_view word) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view word) const;
  std::size_t size() const { return tokens_.size(); }
  static bool is_reserved(TokenId id) { return id < kReserved; }

  /// One "token<TAB>index" line per entry, in index order.
  std::string serialize() const;
  /// Inverse of serialize(); indices must be dense and start with the
  /// reserved markers.
  static Vocabulary parse(std::string_view text);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Token sequence of one report with the positions of its sentence-end
/// markers.
struct TokenizedReport {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> sentence_ends;

  /// Scans for sentence-end markers; throws FormatError unless exactly
  /// `expected_sentences` are present.
  static TokenizedReport from_tokens(std::vector<TokenId> tokens, std::size_t expected_sentences);

  std::size_t sentence_count() const { return sentence_ends.size(); }
  /// Tokens that are not reserved markers.
  std::size_t word_count() const;
};

/// <bos> s1 <eos_sent> s2 <eos_sent> ... <eos>, words mapped through `vocab`.
TokenizedReport encode_report_text(const Vocabulary& vocab, const std::vector<std::string>& sentences);

/// Splits a token sequence at sentence-end markers, stopping at <eos>.
/// Reserved markers are not emitted.
std::vector<std::string> decode_sentences(const Vocabulary& vocab, const std::vector<TokenId>& tokens);

}  // namespace tandem
