#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace corrkg {

inline constexpr std::string_view kDigitToken = "<digit>";

namespace detail {
inline bool ascii_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
inline bool ascii_digit(unsigned char c) { return c >= '0' && c <= '9'; }
inline bool ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}
}  // namespace detail

/// Lowercases ASCII, splits on whitespace, detaches each ASCII punctuation
/// character as its own token and replaces every maximal run of ASCII digits
/// with "<digit>". Non-ASCII bytes are kept inside words untouched.
inline std::vector<std::string> preprocess_text(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto c = static_cast<unsigned char>(raw[i]);
    if (detail::ascii_space(c)) {
      flush();
    } else if (detail::ascii_digit(c)) {
      flush();
      while (i + 1 < raw.size() && detail::ascii_digit(static_cast<unsigned char>(raw[i + 1]))) ++i;
      tokens.emplace_back(kDigitToken);
    } else if (detail::ascii_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      word.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      word.push_back(static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace corrkg
