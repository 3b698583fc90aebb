#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rarelab/core/io.hpp"
#include "rarelab/text/corpus.hpp"
#include "rarelab/text/utf8.hpp"

namespace rarelab::text {

using TokenId = std::size_t;

inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kMask = "[MASK]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kColon = ":";
inline constexpr std::string_view kSlash = "/";
inline constexpr std::string_view kContinuation = "##";

/// Reserved tokens, always the first ids of a built vocabulary.
inline constexpr std::array<std::string_view, 7> kReservedTokens = {
    kPad, kCls, kSep, kMask, kUnk, kColon, kSlash};

/// Per-word piece ranges [begin, end) into a flat id sequence.
struct WordPieces {
  std::vector<TokenId> ids;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

/// Wordpiece inventory with greedy longest-match-first tokenization.
class Vocabulary {
 public:
  Vocabulary() = default;

  /// Builds from an explicit token list. Reserved tokens must each appear
  /// exactly once; every other token must be unique.
  explicit Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (TokenId i = 0; i < tokens_.size(); ++i) {
      if (!ids_.emplace(tokens_[i], i).second) {
        throw DomainError("duplicate vocabulary token '" + tokens_[i] + "'");
      }
      max_chars_ = std::max(max_chars_, utf8_chars(tokens_[i]).size());
    }
    for (auto special : kReservedTokens) {
      if (!ids_.contains(std::string(special))) {
        throw DomainError("vocabulary lacks reserved token " + std::string(special));
      }
    }
    pad_ = id(kPad);
    cls_ = id(kCls);
    sep_ = id(kSep);
    mask_ = id(kMask);
    unk_ = id(kUnk);
    colon_ = id(kColon);
    slash_ = id(kSlash);
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  TokenId id(std::string_view token) const {
    auto found = find(token);
    if (!found) throw DomainError("token '" + std::string(token) + "' not in vocabulary");
    return *found;
  }
  bool contains(std::string_view token) const { return find(token).has_value(); }

  TokenId pad_id() const { return pad_; }
  TokenId cls_id() const { return cls_; }
  TokenId sep_id() const { return sep_; }
  TokenId mask_id() const { return mask_; }
  TokenId unk_id() const { return unk_; }
  TokenId colon_id() const { return colon_; }
  TokenId slash_id() const { return slash_; }

  /// Structural tokens that never stand for corpus text.
  bool is_control(TokenId id) const {
    return id == pad_ || id == cls_ || id == sep_ || id == mask_ || id == unk_;
  }

  /// Greedy longest match from the left; non-initial pieces use the "##"
  /// inventory. A word equal to a reserved token maps to that token. A word
  /// with a character outside the inventory becomes a single [UNK].
  std::vector<TokenId> tokenize_word(std::string_view word) const {
    if (auto whole = find(word)) return {*whole};
    const auto chars = utf8_chars(word);
    std::vector<TokenId> out;
    std::size_t start = 0;
    while (start < chars.size()) {
      std::optional<TokenId> match;
      std::size_t match_end = start;
      const std::size_t limit = std::min(chars.size(), start + max_chars_);
      for (std::size_t end = limit; end > start; --end) {
        std::string piece = start == 0 ? std::string() : std::string(kContinuation);
        for (std::size_t c = start; c < end; ++c) piece += chars[c];
        if (auto hit = find(piece)) {
          match = hit;
          match_end = end;
          break;
        }
      }
      if (!match) return {unk_};
      out.push_back(*match);
      start = match_end;
    }
    return out;
  }

  std::vector<TokenId> tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    for (const auto& word : split_whitespace(text)) {
      auto ids = tokenize_word(word);
      out.insert(out.end(), ids.begin(), ids.end());
    }
    return out;
  }

  WordPieces tokenize_words(const std::vector<std::string>& words) const {
    WordPieces out;
    for (const auto& word : words) {
      auto ids = tokenize_word(word);
      out.spans.emplace_back(out.ids.size(), out.ids.size() + ids.size());
      out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    }
    return out;
  }

  /// Stable content fingerprint (FNV-1a over newline-joined tokens).
  std::string fingerprint() const {
    std::uint64_t h = core::fnv1a("");
    for (const auto& t : tokens_) {
      h = core::fnv1a(t, h);
      h = core::fnv1a("\n", h);
    }
    return core::hex64(h);
  }

  std::string serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
      out += t;
      out += '\n';
    }
    return out;
  }

  void save(const std::filesystem::path& path) const {
    core::write_file_atomic(path, serialize());
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read vocabulary " + path.string());
    std::vector<std::string> tokens;
    for (std::string line; std::getline(in, line);) {
      if (!line.empty()) tokens.push_back(line);
    }
    return Vocabulary(std::move(tokens));
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
  std::size_t max_chars_ = 1;
  TokenId pad_ = 0, cls_ = 0, sep_ = 0, mask_ = 0, unk_ = 0, colon_ = 0, slash_ = 0;
};

/// Joins pieces back into surface text, dropping "##" markers.
inline std::string detokenize_word(const Vocabulary& vocab, const std::vector<TokenId>& ids) {
  std::string out;
  for (TokenId id : ids) {
    const auto& t = vocab.token(id);
    if (t.starts_with(kContinuation) && t.size() > kContinuation.size()) {
      out += t.substr(kContinuation.size());
    } else {
      out += t;
    }
  }
  return out;
}

/// Builds an inventory of `target_size` tokens: reserved tokens, every
/// corpus character (initial and "##" form), whole words with frequency at
/// least `min_whole_word_freq` (most frequent first, then lexicographic),
/// then the most frequent fragments of the remaining words.
inline Vocabulary build_vocab(const Corpus& corpus, std::size_t target_size,
                              std::size_t min_whole_word_freq) {
  std::vector<std::string> tokens;
  std::set<std::string> present;
  auto add = [&](const std::string& t) {
    if (present.insert(t).second) tokens.push_back(t);
  };
  for (auto t : kReservedTokens) add(std::string(t));

  std::set<std::string> alphabet;
  for (const auto& [word, count] : corpus.frequencies()) {
    for (auto& c : utf8_chars(word)) alphabet.insert(std::move(c));
  }
  for (const auto& c : alphabet) {
    add(c);
    add(std::string(kContinuation) + c);
  }
  if (target_size < tokens.size()) {
    throw DomainError("vocabulary size " + std::to_string(target_size) +
                      " cannot hold " + std::to_string(tokens.size()) +
                      " reserved and alphabet tokens");
  }

  const auto ranked = corpus.words_by_frequency();
  for (const auto& [word, count] : ranked) {
    if (tokens.size() >= target_size) break;
    if (count < min_whole_word_freq) break;
    add(word);
  }

  // Fragment candidates from words that did not make it as whole tokens.
  constexpr std::size_t kMaxFragment = 6;
  std::map<std::string, std::size_t> fragments;
  for (const auto& [word, count] : ranked) {
    if (present.contains(word)) continue;
    const auto chars = utf8_chars(word);
    for (std::size_t i = 0; i < chars.size(); ++i) {
      std::string piece = i == 0 ? std::string() : std::string(kContinuation);
      for (std::size_t j = i; j < chars.size() && j - i < kMaxFragment; ++j) {
        piece += chars[j];
        if (j > i && !(i == 0 && j + 1 == chars.size())) fragments[piece] += count;
      }
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ordered(fragments.begin(), fragments.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (const auto& [piece, count] : ordered) {
    if (tokens.size() >= target_size) break;
    add(piece);
  }
  return Vocabulary(std::move(tokens));
}

}  // namespace rarelab::text
