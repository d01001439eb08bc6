#pragma once

// Keyphrase evaluation on stemmed token sequences.
//
// F1@K scores present predictions against present gold phrases, R@K scores
// absent predictions against absent gold phrases, and N@K is alpha-NDCG over
// the full prediction list where a prediction is relevant to a gold phrase
// when one word set contains the other.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "corrkg/porter.hpp"
#include "corrkg/text.hpp"

namespace corrkg {

using Phrase = std::vector<std::string>;

/// Tokenizes and stems a raw phrase string.
inline Phrase normalize_phrase(const std::string& raw) { return stem_phrase(preprocess_text(raw)); }

/// True when `phrase` occurs as a contiguous run in `source`.
inline bool occurs_in(const Phrase& phrase, const Phrase& source) {
  if (phrase.empty()) return false;
  return std::search(source.begin(), source.end(), phrase.begin(), phrase.end()) != source.end();
}

/// Removes empty phrases and later repeats of an identical phrase.
inline std::vector<Phrase> dedup_phrases(const std::vector<Phrase>& phrases) {
  std::set<Phrase> seen;
  std::vector<Phrase> out;
  for (const auto& p : phrases)
    if (!p.empty() && seen.insert(p).second) out.push_back(p);
  return out;
}

struct PresentAbsent {
  std::vector<Phrase> present;
  std::vector<Phrase> absent;
};

inline PresentAbsent split_present_absent(const std::vector<Phrase>& phrases, const Phrase& source) {
  PresentAbsent out;
  for (const auto& p : phrases) (occurs_in(p, source) ? out.present : out.absent).push_back(p);
  return out;
}

struct PRF {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

namespace metrics_detail {

inline void check_k(std::size_t k) {
  if (k < 1) throw std::invalid_argument("metrics: k must be >= 1");
}

inline std::size_t count_matches(const std::vector<Phrase>& top, const std::vector<Phrase>& gold) {
  const std::set<Phrase> g(gold.begin(), gold.end());
  return static_cast<std::size_t>(
      std::count_if(top.begin(), top.end(), [&](const Phrase& p) { return g.count(p) != 0; }));
}

inline std::vector<Phrase> top_k(const std::vector<Phrase>& predicted, std::size_t k) {
  std::vector<Phrase> d = dedup_phrases(predicted);
  if (d.size() > k) d.resize(k);
  return d;
}

}  // namespace metrics_detail

/// Exact-match precision/recall/F1 of the top k (deduplicated) predictions.
/// Precision divides by the number of predictions kept, min(k, |pred|).
/// nullopt when there is no gold phrase to recall.
inline std::optional<PRF> f1_at_k(const std::vector<Phrase>& predicted,
                                  const std::vector<Phrase>& gold, std::size_t k) {
  metrics_detail::check_k(k);
  const std::vector<Phrase> g = dedup_phrases(gold);
  if (g.empty()) return std::nullopt;
  const std::vector<Phrase> top = metrics_detail::top_k(predicted, k);
  const double matches = static_cast<double>(metrics_detail::count_matches(top, g));
  PRF r;
  r.precision = top.empty() ? 0.0 : matches / static_cast<double>(top.size());
  r.recall = matches / static_cast<double>(g.size());
  r.f1 = r.precision + r.recall > 0 ? 2 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

inline std::optional<double> recall_at_k(const std::vector<Phrase>& predicted,
                                         const std::vector<Phrase>& gold, std::size_t k) {
  metrics_detail::check_k(k);
  const std::vector<Phrase> g = dedup_phrases(gold);
  if (g.empty()) return std::nullopt;
  const std::vector<Phrase> top = metrics_detail::top_k(predicted, k);
  return static_cast<double>(metrics_detail::count_matches(top, g)) / static_cast<double>(g.size());
}

/// Word-set containment in either direction.
inline bool relevance(const Phrase& a, const Phrase& b) {
  const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  return std::includes(sa.begin(), sa.end(), sb.begin(), sb.end()) ||
         std::includes(sb.begin(), sb.end(), sa.begin(), sa.end());
}

/// Relevance matrix J[d][i] between candidates and gold phrases.
inline std::vector<std::vector<bool>> relevance_matrix(const std::vector<Phrase>& candidates,
                                                       const std::vector<Phrase>& gold) {
  std::vector<std::vector<bool>> j(candidates.size(), std::vector<bool>(gold.size()));
  for (std::size_t d = 0; d < candidates.size(); ++d)
    for (std::size_t i = 0; i < gold.size(); ++i) j[d][i] = relevance(candidates[d], gold[i]);
  return j;
}

/// DCG of a ranking given as rows of a relevance matrix, cut at k:
///   G[r] = sum_i J(d_r, i) (1 - alpha)^{hits_i before r},  DCG = sum_r G[r] / log2(r + 1).
inline double alpha_dcg(const std::vector<std::vector<bool>>& rel_rows, double alpha, std::size_t k) {
  if (rel_rows.empty()) return 0.0;
  std::vector<int> hits(rel_rows.front().size(), 0);
  double dcg = 0;
  for (std::size_t r = 0; r < std::min(k, rel_rows.size()); ++r) {
    double gain = 0;
    for (std::size_t i = 0; i < hits.size(); ++i) {
      if (!rel_rows[r][i]) continue;
      gain += std::pow(1.0 - alpha, hits[i]);
      ++hits[i];
    }
    dcg += gain / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg;
}

/// Greedy ideal DCG: at each rank pick the unused candidate with the largest
/// marginal gain (earliest candidate on ties).
inline double greedy_ideal_dcg(const std::vector<std::vector<bool>>& pool_rel, double alpha,
                               std::size_t k) {
  if (pool_rel.empty()) return 0.0;
  const std::size_t m = pool_rel.front().size();
  std::vector<int> hits(m, 0);
  std::vector<bool> used(pool_rel.size(), false);
  double dcg = 0;
  for (std::size_t r = 0; r < std::min(k, pool_rel.size()); ++r) {
    double best = -1;
    std::size_t pick = 0;
    for (std::size_t d = 0; d < pool_rel.size(); ++d) {
      if (used[d]) continue;
      double gain = 0;
      for (std::size_t i = 0; i < m; ++i)
        if (pool_rel[d][i]) gain += std::pow(1.0 - alpha, hits[i]);
      if (gain > best) {
        best = gain;
        pick = d;
      }
    }
    used[pick] = true;
    for (std::size_t i = 0; i < m; ++i)
      if (pool_rel[pick][i]) ++hits[i];
    dcg += best / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg;
}

/// Candidate pool for the ideal ranking: every prediction, then each gold
/// phrase not already predicted verbatim.
inline std::vector<Phrase> ideal_pool(const std::vector<Phrase>& predicted,
                                      const std::vector<Phrase>& gold) {
  std::vector<Phrase> pool = predicted;
  for (const auto& g : gold)
    if (std::find(predicted.begin(), predicted.end(), g) == predicted.end()) pool.push_back(g);
  return pool;
}

/// alpha-NDCG@k with a greedy ideal over predictions and gold. Clamped to 1
/// in the rare case where greedy underestimates the ideal.
inline double alpha_ndcg_at_k(const std::vector<Phrase>& predicted, const std::vector<Phrase>& gold,
                              double alpha, std::size_t k) {
  metrics_detail::check_k(k);
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha_ndcg: alpha must be in (0, 1)");
  const std::vector<Phrase> g = dedup_phrases(gold);
  if (predicted.empty() || g.empty()) return 0.0;
  const double dcg = alpha_dcg(relevance_matrix(predicted, g), alpha, k);
  const double ideal = greedy_ideal_dcg(relevance_matrix(ideal_pool(predicted, g), g), alpha, k);
  if (ideal <= 0.0) return 0.0;
  return std::min(1.0, dcg / ideal);
}

// ---------------------------------------------------------------------------
// Document and corpus level

struct EvalPair {
  std::vector<Phrase> predicted;  // stemmed, in rank order
  std::vector<Phrase> gold;       // stemmed
  Phrase source;                  // stemmed source tokens
};

struct DocumentScores {
  std::map<std::size_t, std::optional<PRF>> f1_at;
  std::map<std::size_t, std::optional<double>> r_at;
  std::map<std::size_t, std::optional<double>> ndcg_at;
  std::size_t present_gold = 0;
  std::size_t absent_gold = 0;
};

inline DocumentScores evaluate_document(const EvalPair& pair, const std::vector<std::size_t>& ks,
                                        double alpha) {
  const std::vector<Phrase> gold = dedup_phrases(pair.gold);
  const PresentAbsent g = split_present_absent(gold, pair.source);
  const PresentAbsent p = split_present_absent(pair.predicted, pair.source);
  DocumentScores s;
  s.present_gold = g.present.size();
  s.absent_gold = g.absent.size();
  for (std::size_t k : ks) {
    s.f1_at[k] = f1_at_k(p.present, g.present, k);
    s.r_at[k] = recall_at_k(p.absent, g.absent, k);
    s.ndcg_at[k] = gold.empty() ? std::nullopt
                                : std::optional<double>(alpha_ndcg_at_k(pair.predicted, gold, alpha, k));
  }
  return s;
}

struct MeanScore {
  double value = 0;
  std::size_t docs = 0;  // documents contributing
};

struct EvalReport {
  std::map<std::size_t, MeanScore> precision_at, recall_present_at, f1_at, r_at, ndcg_at;
  std::size_t docs = 0;
  std::size_t present_gold = 0;
  std::size_t absent_gold = 0;
};

/// Macro average; documents where a metric is undefined are left out of it.
inline EvalReport aggregate(const std::vector<DocumentScores>& docs, const std::vector<std::size_t>& ks) {
  EvalReport r;
  r.docs = docs.size();
  auto push = [](MeanScore& m, double v) {
    m.value += v;
    ++m.docs;
  };
  for (const auto& d : docs) {
    r.present_gold += d.present_gold;
    r.absent_gold += d.absent_gold;
    for (std::size_t k : ks) {
      if (const auto& f = d.f1_at.at(k)) {
        push(r.precision_at[k], f->precision);
        push(r.recall_present_at[k], f->recall);
        push(r.f1_at[k], f->f1);
      }
      if (const auto& x = d.r_at.at(k)) push(r.r_at[k], *x);
      if (const auto& x = d.ndcg_at.at(k)) push(r.ndcg_at[k], *x);
    }
  }
  for (auto* table : {&r.precision_at, &r.recall_present_at, &r.f1_at, &r.r_at, &r.ndcg_at}) {
    for (std::size_t k : ks) {
      MeanScore& m = (*table)[k];
      if (m.docs) m.value /= static_cast<double>(m.docs);
    }
  }
  return r;
}

}  // namespace corrkg
