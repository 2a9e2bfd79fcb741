#ifndef BIENC_BPE_HPP
#define BIENC_BPE_HPP

// Byte-pair-encoding subword tokenizer with a reserved special-token set.
//
// Input is lower-cased and split on whitespace; BPE operates inside each word.
// Every word ends with the end-of-word symbol `</w>`, which takes part in
// merges like any other symbol and lets decode() restore word boundaries.
// Special tokens are matched verbatim (case-sensitive) before lower-casing and
// always map to their single reserved id.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bienc/common.hpp"
#include "bienc/corpus.hpp"

namespace bienc {

using TokenId = std::int32_t;

namespace tokens {
inline constexpr std::string_view kPad = "[PAD]";
inline constexpr std::string_view kUnk = "[UNK]";
inline constexpr std::string_view kCls = "[CLS]";
inline constexpr std::string_view kSep = "[SEP]";
inline constexpr std::string_view kMentionStart = "[Ms]";
inline constexpr std::string_view kMentionEnd = "[Me]";
inline constexpr std::string_view kEnt = "[ENT]";
inline constexpr std::string_view kHeadSep = "[H_SEP]";
inline constexpr std::string_view kEndOfWord = "</w>";

inline std::string type_token(std::string_view label) { return "[" + std::string(label) + "]"; }

/// Structural specials followed by one token per entity-type label.
inline std::vector<std::string> special_tokens(const TypeLabelSet& types) {
  std::vector<std::string> out = {std::string(kPad), std::string(kUnk),          std::string(kCls),
                                  std::string(kSep), std::string(kMentionStart), std::string(kMentionEnd),
                                  std::string(kEnt), std::string(kHeadSep)};
  for (const auto& l : types.labels()) out.push_back(type_token(l));
  return out;
}
}  // namespace tokens

namespace detail {

/// Splits a UTF-8 string into code points; stray bytes are kept as single units.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0 && c < 0xF8) len = 4;
    else if (c >= 0xE0) len = (c < 0xF0) ? 3 : 1;
    else if (c >= 0xC0) len = 2;
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) len = 1;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

/// A pre-tokenized unit: either a reserved special or a lower-cased word.
struct Piece {
  bool special = false;
  std::string text;
};

inline std::vector<Piece> pretokenize(std::string_view text, const std::vector<std::string>& specials) {
  std::vector<Piece> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back({false, ascii_lower(word)});
    word.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '[') {
      std::size_t best = 0;
      const std::string* match = nullptr;
      for (const auto& s : specials)
        if (s.size() > best && text.substr(i, s.size()) == s) {
          best = s.size();
          match = &s;
        }
      if (match) {
        flush();
        out.push_back({true, *match});
        i += best;
        continue;
      }
    }
    if (is_space(text[i])) flush();
    else word += text[i];
    ++i;
  }
  flush();
  return out;
}

inline std::vector<std::string> word_symbols(std::string_view word) {
  auto syms = utf8_chars(word);
  syms.emplace_back(tokens::kEndOfWord);
  return syms;
}

}  // namespace detail

/// Token inventory plus ordered merge rules. Ids are contiguous from 0:
/// specials first, then the base alphabet, then one token per merge.
class Vocabulary {
 public:
  using Merge = std::pair<std::string, std::string>;

  Vocabulary() = default;

  /// Assembles a vocabulary and checks its invariants.
  Vocabulary(std::vector<std::string> tokens, std::vector<Merge> merges, const TypeLabelSet& types = {})
      : tokens_(std::move(tokens)), merges_(std::move(merges)), specials_(tokens::special_tokens(types)) {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i].empty()) throw ValidationError("empty token at id " + std::to_string(i));
      if (!index_.emplace(tokens_[i], static_cast<TokenId>(i)).second)
        throw ValidationError("duplicate token '" + tokens_[i] + "'");
    }
    for (const auto& s : specials_)
      if (!index_.count(s)) throw ValidationError("vocabulary lacks special token " + s);
    std::set<std::string> produced;
    for (std::size_t r = 0; r < merges_.size(); ++r) {
      const auto& [a, b] = merges_[r];
      if (!index_.count(a) || !index_.count(b) || !index_.count(a + b))
        throw ValidationError("merge '" + a + " " + b + "' references unknown tokens");
      if (is_special_token(a) || is_special_token(b)) throw ValidationError("merge involves a special token");
      if (!merge_rank_.emplace(merges_[r], r).second) throw ValidationError("duplicate merge '" + a + " " + b + "'");
      produced.insert(a + b);
    }
    alphabet_size_ = 0;
    for (const auto& t : tokens_)
      if (!is_special_token(t) && !produced.count(t)) ++alphabet_size_;
    pad_ = id(tokens::kPad);
    unk_ = id(tokens::kUnk);
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t alphabet_size() const { return alphabet_size_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::vector<std::string>& specials() const { return specials_; }

  std::optional<TokenId> find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  TokenId id(std::string_view token) const {
    auto found = find(token);
    if (!found) throw ValidationError("token '" + std::string(token) + "' not in vocabulary");
    return *found;
  }
  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw std::out_of_range("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
  }
  bool is_special(TokenId id) const { return is_special_token(token(id)); }
  TokenId pad_id() const { return pad_; }
  TokenId unk_id() const { return unk_; }

  /// Applies the merges, lowest rank first, to one lower-cased word.
  std::vector<std::string> segment_word(std::string_view word) const {
    auto syms = detail::word_symbols(word);
    while (syms.size() > 1) {
      std::size_t best_rank = merges_.size();
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = merge_rank_.find(Merge{syms[i], syms[i + 1]});
        if (it != merge_rank_.end() && it->second < best_rank) best_rank = it->second;
      }
      if (best_rank == merges_.size()) break;
      const auto& [a, b] = merges_[best_rank];
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
          next.push_back(a + b);
          i += 2;
        } else {
          next.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(next);
    }
    return syms;
  }

  std::vector<TokenId> encode(std::string_view text) const {
    std::vector<TokenId> out;
    for (const auto& piece : detail::pretokenize(text, specials_)) {
      if (piece.special) {
        out.push_back(id(piece.text));
        continue;
      }
      for (const auto& sym : segment_word(piece.text)) {
        auto found = find(sym);
        out.push_back(found ? *found : unk_);
      }
    }
    return out;
  }

  /// Inverse of encode() up to lower-casing and whitespace normalization.
  std::string decode(std::span<const TokenId> ids) const {
    std::vector<std::string> words;
    std::string current;
    auto flush = [&] {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    };
    for (TokenId i : ids) {
      const auto& t = token(i);
      if (is_special_token(t)) {
        flush();
        words.push_back(t);
      } else if (t.size() >= tokens::kEndOfWord.size() && t.ends_with(tokens::kEndOfWord)) {
        current += t.substr(0, t.size() - tokens::kEndOfWord.size());
        flush();
      } else {
        current += t;
      }
    }
    flush();
    std::string out;
    for (const auto& w : words) {
      if (!out.empty()) out += ' ';
      out += w;
    }
    return out;
  }

  /// Token per line (line number = id) and `left right` per merge line.
  void save(const std::string& vocab_path, const std::string& merges_path) const {
    std::ofstream v(vocab_path), m(merges_path);
    if (!v || !m) throw Error("cannot write vocabulary to " + vocab_path + " / " + merges_path);
    for (const auto& t : tokens_) v << t << '\n';
    for (const auto& [a, b] : merges_) m << a << ' ' << b << '\n';
  }

  static Vocabulary load(const std::string& vocab_path, const std::string& merges_path,
                         const TypeLabelSet& types = {}) {
    std::vector<std::string> toks;
    detail::for_each_line(vocab_path, [&](const std::string& line, std::size_t lineno) {
      if (line.empty()) throw ParseError(vocab_path, lineno, "empty token");
      toks.push_back(line);
    });
    std::vector<Merge> merges;
    detail::for_each_line(merges_path, [&](const std::string& line, std::size_t lineno) {
      if (line.empty()) return;
      const auto sp = line.find(' ');
      if (sp == std::string::npos || sp == 0 || sp + 1 == line.size() || line.find(' ', sp + 1) != std::string::npos)
        throw ParseError(merges_path, lineno, "expected 'left right'");
      merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    });
    return Vocabulary(std::move(toks), std::move(merges), types);
  }

 private:
  bool is_special_token(std::string_view t) const {
    return std::find(specials_.begin(), specials_.end(), t) != specials_.end();
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> merge_rank_;
  std::vector<std::string> specials_;
  std::size_t alphabet_size_ = 0;
  TokenId pad_ = 0;
  TokenId unk_ = 0;
};

/// Learns merges until the vocabulary reaches `target_vocab_size` or no pair
/// is left. Ties between equally frequent pairs go to the lexicographically
/// smallest pair. A pair whose concatenation is already a token is skipped,
/// so every merge adds exactly one token.
inline Vocabulary train_bpe(std::span<const std::string> texts, std::size_t target_vocab_size,
                            const TypeLabelSet& types = {}) {
  const auto specials = tokens::special_tokens(types);

  std::map<std::string, std::int64_t> word_counts;
  for (const auto& text : texts)
    for (const auto& piece : detail::pretokenize(text, specials))
      if (!piece.special) ++word_counts[piece.text];
  if (word_counts.empty()) throw ValidationError("cannot train BPE on an empty corpus");

  struct Word {
    std::vector<std::string> syms;
    std::int64_t count;
  };
  std::vector<Word> words;
  std::set<std::string> alphabet;
  for (const auto& [w, c] : word_counts) {
    words.push_back({detail::word_symbols(w), c});
    alphabet.insert(words.back().syms.begin(), words.back().syms.end());
  }

  std::vector<std::string> vocab = specials;
  std::set<std::string> known(specials.begin(), specials.end());
  for (const auto& a : alphabet)
    if (known.insert(a).second) vocab.push_back(a);
  if (target_vocab_size < vocab.size())
    throw ValidationError("target vocabulary size " + std::to_string(target_vocab_size) +
                          " is below alphabet + specials (" + std::to_string(vocab.size()) + ")");

  using Merge = Vocabulary::Merge;
  std::map<Merge, std::int64_t> pair_counts;
  std::map<Merge, std::set<std::size_t>> pair_words;
  auto add_pairs = [&](std::size_t wi, std::int64_t sign) {
    const auto& w = words[wi];
    for (std::size_t i = 0; i + 1 < w.syms.size(); ++i) {
      Merge p{w.syms[i], w.syms[i + 1]};
      auto& c = pair_counts[p];
      c += sign * w.count;
      if (sign > 0) pair_words[p].insert(wi);
      if (c == 0) pair_counts.erase(p);
    }
  };
  for (std::size_t wi = 0; wi < words.size(); ++wi) add_pairs(wi, +1);

  std::vector<Merge> merges;
  std::set<Merge> skipped;
  while (vocab.size() < target_vocab_size) {
    const Merge* best = nullptr;
    std::int64_t best_count = 0;
    for (const auto& [p, c] : pair_counts)
      if (c > best_count && !skipped.count(p)) {
        best = &p;
        best_count = c;
      }
    if (!best) break;
    const Merge merge = *best;
    const std::string joined = merge.first + merge.second;
    if (known.count(joined)) {
      skipped.insert(merge);
      continue;
    }
    merges.push_back(merge);
    vocab.push_back(joined);
    known.insert(joined);

    const auto affected = pair_words[merge];
    for (std::size_t wi : affected) {
      add_pairs(wi, -1);
      auto& syms = words[wi].syms;
      std::vector<std::string> next;
      next.reserve(syms.size());
      for (std::size_t i = 0; i < syms.size();) {
        if (i + 1 < syms.size() && syms[i] == merge.first && syms[i + 1] == merge.second) {
          next.push_back(joined);
          i += 2;
        } else {
          next.push_back(syms[i]);
          ++i;
        }
      }
      syms = std::move(next);
      add_pairs(wi, +1);
    }
  }
  return Vocabulary(std::move(vocab), std::move(merges), types);
}

inline Vocabulary train_bpe(const std::vector<std::string>& texts, std::size_t target_vocab_size,
                            const TypeLabelSet& types = {}) {
  return train_bpe(std::span<const std::string>(texts), target_vocab_size, types);
}

}  // namespace bienc

#endif  // BIENC_BPE_HPP
