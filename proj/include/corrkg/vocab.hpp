#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "corrkg/errors.hpp"
#include "corrkg/text.hpp"

namespace corrkg {

using TokenId = std::size_t;

/// Word <-> id map. Ids 0..4 are the reserved block PAD, UNK, BOS, EOS, DIGIT.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kDigit = 4;
  static constexpr std::size_t kReserved = 5;

  static const std::array<std::string, kReserved>& reserved_tokens() {
    static const std::array<std::string, kReserved> tokens{"<pad>", "<unk>", "<s>", "</s>",
                                                           std::string(kDigitToken)};
    return tokens;
  }

  Vocab() {
    for (const auto& t : reserved_tokens()) push(t);
  }

  std::size_t size() const { return words_.size(); }

  std::optional<TokenId> find(const std::string& word) const {
    auto it = ids_.find(word);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  TokenId lookup(const std::string& word) const { return find(word).value_or(kUnk); }
  bool contains(const std::string& word) const { return ids_.count(word) != 0; }

  const std::string& word(TokenId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  void add(const std::string& word) {
    if (word.empty() || word.find('\n') != std::string::npos) {
      throw std::invalid_argument("vocab: invalid token");
    }
    if (contains(word)) throw std::invalid_argument("vocab: duplicate token '" + word + "'");
    push(word);
  }

  /// FNV-1a over the newline-joined token list, reserved block included.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& w : words_) {
      for (unsigned char c : w) {
        h ^= c;
        h *= 1099511628211ULL;
      }
      h ^= static_cast<unsigned char>('\n');
      h *= 1099511628211ULL;
    }
    return h;
  }

  /// One non-reserved token per line; line i holds id kReserved + i.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("vocab: cannot write " + path);
    for (std::size_t i = kReserved; i < words_.size(); ++i) out << words_[i] << '\n';
  }

  static Vocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("vocab: cannot read " + path);
    Vocab v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) throw DataError("vocab: empty token at line " + std::to_string(line_no));
      if (v.contains(line)) {
        throw DataError("vocab: duplicate token at line " + std::to_string(line_no));
      }
      v.push(line);
    }
    return v;
  }

 private:
  void push(const std::string& word) {
    ids_.emplace(word, words_.size());
    words_.push_back(word);
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Keeps the (cap - reserved) most frequent tokens. Ties go to the token seen
/// first. Reserved tokens appearing in the streams are not double-counted.
inline Vocab build_vocab(const std::vector<std::vector<std::string>>& streams, std::size_t cap) {
  if (cap < Vocab::kReserved) {
    throw std::invalid_argument("build_vocab: cap " + std::to_string(cap) +
                                " is below the reserved block size");
  }
  Vocab reserved;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::pair<std::string, std::size_t>> counts;  // first-occurrence order
  for (const auto& stream : streams) {
    for (const auto& tok : stream) {
      if (reserved.contains(tok)) continue;
      auto [it, inserted] = index.try_emplace(tok, counts.size());
      if (inserted) counts.emplace_back(tok, 0);
      ++counts[it->second].second;
    }
  }
  std::stable_sort(counts.begin(), counts.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(counts.size(), cap - Vocab::kReserved);
  for (std::size_t i = 0; i < keep; ++i) reserved.add(counts[i].first);
  return reserved;
}

}  // namespace corrkg
