#pragma once

// Porter (1980) suffix stripper, original rule set without later extensions.
// Within each step the first listed (longest) matching suffix is the only
// candidate: if its condition fails, the step leaves the word unchanged.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "corrkg/text.hpp"

namespace corrkg {

namespace porter_detail {

inline bool is_vowel_letter(char c) {
  return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u';
}

/// y is a consonant at the start of a word or after a vowel.
inline bool is_consonant(std::string_view w, std::size_t i) {
  if (is_vowel_letter(w[i])) return false;
  if (w[i] != 'y') return true;
  return i == 0 ? true : !is_consonant(w, i - 1);
}

/// m in [C](VC){m}[V].
inline int measure(std::string_view w) {
  int m = 0;
  bool prev_vowel = false;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const bool cons = is_consonant(w, i);
    if (cons && prev_vowel) ++m;
    prev_vowel = !cons;
  }
  return m;
}

inline bool contains_vowel(std::string_view w) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!is_consonant(w, i)) return true;
  return false;
}

inline bool ends_double_consonant(std::string_view w) {
  const std::size_t n = w.size();
  return n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

/// *o: ends consonant-vowel-consonant, last consonant not w, x or y.
inline bool ends_cvc(std::string_view w) {
  const std::size_t n = w.size();
  if (n < 3) return false;
  const char last = w[n - 1];
  return is_consonant(w, n - 3) && !is_consonant(w, n - 2) && is_consonant(w, n - 1) &&
         last != 'w' && last != 'x' && last != 'y';
}

inline bool ends_with(std::string_view w, std::string_view s) {
  return w.size() >= s.size() && w.substr(w.size() - s.size()) == s;
}

struct Rule {
  std::string_view suffix;
  std::string_view replacement;
  bool (*condition)(std::string_view stem);
};

inline bool m_gt0(std::string_view s) { return measure(s) > 0; }
inline bool m_gt1(std::string_view s) { return measure(s) > 1; }
inline bool m_gt1_st(std::string_view s) {
  return measure(s) > 1 && !s.empty() && (s.back() == 's' || s.back() == 't');
}

inline void apply_rules(std::string& w, const std::vector<Rule>& rules) {
  for (const Rule& r : rules) {
    if (!ends_with(w, r.suffix)) continue;
    const std::string_view stem(w.data(), w.size() - r.suffix.size());
    if (r.condition == nullptr || r.condition(stem)) {
      w.resize(stem.size());
      w += r.replacement;
    }
    return;
  }
}

inline void step1a(std::string& w) {
  apply_rules(w, {{"sses", "ss", nullptr}, {"ies", "i", nullptr}, {"ss", "ss", nullptr},
                  {"s", "", nullptr}});
}

inline void step1b(std::string& w) {
  if (ends_with(w, "eed")) {
    if (measure(std::string_view(w).substr(0, w.size() - 3)) > 0) w.resize(w.size() - 1);
    return;
  }
  bool stripped = false;
  for (std::string_view suf : {std::string_view("ed"), std::string_view("ing")}) {
    if (ends_with(w, suf) && contains_vowel(std::string_view(w).substr(0, w.size() - suf.size()))) {
      w.resize(w.size() - suf.size());
      stripped = true;
      break;
    }
  }
  if (!stripped) return;
  if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
    w += 'e';
  } else if (ends_double_consonant(w)) {
    const char last = w.back();
    if (last != 'l' && last != 's' && last != 'z') w.pop_back();
  } else if (measure(w) == 1 && ends_cvc(w)) {
    w += 'e';
  }
}

inline void step1c(std::string& w) {
  if (ends_with(w, "y") && contains_vowel(std::string_view(w).substr(0, w.size() - 1))) {
    w.back() = 'i';
  }
}

inline void step2(std::string& w) {
  static const std::vector<Rule> rules{
      {"ational", "ate", m_gt0}, {"tional", "tion", m_gt0}, {"enci", "ence", m_gt0},
      {"anci", "ance", m_gt0},   {"izer", "ize", m_gt0},    {"abli", "able", m_gt0},
      {"alli", "al", m_gt0},     {"entli", "ent", m_gt0},   {"eli", "e", m_gt0},
      {"ousli", "ous", m_gt0},   {"ization", "ize", m_gt0}, {"ation", "ate", m_gt0},
      {"ator", "ate", m_gt0},    {"alism", "al", m_gt0},    {"iveness", "ive", m_gt0},
      {"fulness", "ful", m_gt0}, {"ousness", "ous", m_gt0}, {"aliti", "al", m_gt0},
      {"iviti", "ive", m_gt0},   {"biliti", "ble", m_gt0},
  };
  apply_rules(w, rules);
}

inline void step3(std::string& w) {
  static const std::vector<Rule> rules{
      {"icate", "ic", m_gt0}, {"ative", "", m_gt0}, {"alize", "al", m_gt0}, {"iciti", "ic", m_gt0},
      {"ical", "ic", m_gt0},  {"ful", "", m_gt0},   {"ness", "", m_gt0},
  };
  apply_rules(w, rules);
}

inline void step4(std::string& w) {
  static const std::vector<Rule> rules{
      {"al", "", m_gt1},    {"ance", "", m_gt1}, {"ence", "", m_gt1},  {"er", "", m_gt1},
      {"ic", "", m_gt1},    {"able", "", m_gt1}, {"ible", "", m_gt1},  {"ant", "", m_gt1},
      {"ement", "", m_gt1}, {"ment", "", m_gt1}, {"ent", "", m_gt1},   {"ion", "", m_gt1_st},
      {"ou", "", m_gt1},    {"ism", "", m_gt1},  {"ate", "", m_gt1},   {"iti", "", m_gt1},
      {"ous", "", m_gt1},   {"ive", "", m_gt1},  {"ize", "", m_gt1},
  };
  apply_rules(w, rules);
}

inline void step5(std::string& w) {
  if (ends_with(w, "e")) {
    const std::string_view stem(w.data(), w.size() - 1);
    const int m = measure(stem);
    if (m > 1 || (m == 1 && !ends_cvc(stem))) w.pop_back();
  }
  if (ends_with(w, "ll") && measure(w) > 1) w.pop_back();
}

}  // namespace porter_detail

/// Stems one lowercase word. The "<digit>" placeholder passes through.
inline std::string porter_stem(std::string_view word) {
  std::string w(word);
  if (w.empty() || w == kDigitToken) return w;
  porter_detail::step1a(w);
  porter_detail::step1b(w);
  porter_detail::step1c(w);
  porter_detail::step2(w);
  porter_detail::step3(w);
  porter_detail::step4(w);
  porter_detail::step5(w);
  return w;
}

inline std::vector<std::string> stem_phrase(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(porter_stem(t));
  return out;
}

}  // namespace corrkg
