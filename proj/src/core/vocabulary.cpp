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
#include "core/vocabulary.hpp"

#include <cctype>
#include <charconv>
#include <map>

#include "core/errors.hpp"

namespace tandem {
namespace {

constexpr const char* kReservedTokens[] = {"<pad>", "<unk>", "<eos_sent>", "<bos>", "<eos>"};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  for (const char* t : kReservedTokens) {
    index_.emplace(t, static_cast<TokenId>(tokens_.size()));
    tokens_.emplace_back(t);
  }
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& token_lists, std::size_t min_frequency) {
  std::map<std::string, std::size_t> freq;
  std::vector<std::string> order;
  for (const auto& list : token_lists) {
    for (const auto& w : list) {
      if (freq[w]++ == 0) order.push_back(w);
    }
  }
  Vocabulary v;
  for (const auto& w : order) {
    if (freq[w] >= min_frequency) v.add(w);
  }
  return v;
}

TokenId Vocabulary::add(const std::string& word) {
  if (auto it = index_.find(word); it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(word, id);
  tokens_.push_back(word);
  return id;
}

TokenId Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw InputError("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

bool Vocabulary::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary v;
  std::size_t pos = 0;
  std::size_t expected = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string_view::npos) eol = text.size();
    const std::string_view line = text.substr(pos, eol - pos);
    const std::size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError("vocabulary line without tab", pos);
    const std::string_view word = line.substr(0, tab);
    const std::string_view num = line.substr(tab + 1);
    std::size_t index = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), index);
    if (ec != std::errc() || ptr != num.data() + num.size()) throw FormatError("bad vocabulary index", pos + tab + 1);
    if (index != expected) throw FormatError("vocabulary indices are not dense", pos + tab + 1);
    if (index < kReserved) {
      if (word != kReservedTokens[index]) throw FormatError("reserved token mismatch", pos);
    } else {
      v.add(std::string(word));
    }
    ++expected;
    pos = eol + 1;
  }
  if (expected < kReserved) throw FormatError("vocabulary is missing reserved tokens", text.size());
  return v;
}

TokenizedReport TokenizedReport::from_tokens(std::vector<TokenId> tokens, std::size_t expected_sentences) {
  TokenizedReport r;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == Vocabulary::kSentenceEnd) r.sentence_ends.push_back(i);
  }
  if (r.sentence_ends.size() != expected_sentences) {
    throw FormatError("report has " + std::to_string(r.sentence_ends.size()) +
                      " sentence-end markers, expected N=" + std::to_string(expected_sentences));
  }
  r.tokens = std::move(tokens);
  return r;
}

std::size_t TokenizedReport::word_count() const {
  std::size_t n = 0;
  for (TokenId t : tokens) n += Vocabulary::is_reserved(t) ? 0 : 1;
  return n;
}

TokenizedReport encode_report_text(const Vocabulary& vocab, const std::vector<std::string>& sentences) {
  std::vector<TokenId> tokens{Vocabulary::kBos};
  for (const auto& s : sentences) {
    for (const auto& w : tokenize(s)) tokens.push_back(vocab.index_of(w));
    tokens.push_back(Vocabulary::kSentenceEnd);
  }
  tokens.push_back(Vocabulary::kEos);
  return TokenizedReport::from_tokens(std::move(tokens), sentences.size());
}

std::vector<std::string> decode_sentences(const Vocabulary& vocab, const std::vector<TokenId>& tokens) {
  std::vector<std::string> out;
  std::string cur;
  for (TokenId t : tokens) {
    if (t == Vocabulary::kEos) break;
    if (t == Vocabulary::kSentenceEnd) {
      out.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    if (Vocabulary::is_reserved(t) && t != Vocabulary::kUnk) continue;
    if (!cur.empty()) cur += ' ';
    cur += vocab.token(t);
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace tandem
