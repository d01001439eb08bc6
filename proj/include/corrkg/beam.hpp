#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "corrkg/vocab.hpp"

namespace corrkg {

struct BeamConfig {
  std::size_t beam_size = 200;
  std::size_t depth = 6;  // maximum tokens per hypothesis, EOS included
  TokenId bos = Vocab::kBos;
  TokenId eos = Vocab::kEos;
};

template <class State>
struct Hypothesis {
  std::vector<TokenId> tokens;  // emitted tokens, EOS included when finished
  double score = 0;             // sum of step log-probabilities
  std::shared_ptr<const State> state;
  bool finished = false;

  TokenId last(TokenId bos) const { return tokens.empty() ? bos : tokens.back(); }
};

template <class State>
struct BeamResult {
  std::vector<Hypothesis<State>> finished;    // ranked
  std::vector<Hypothesis<State>> unfinished;  // final live beam, ranked
};

/// Best first: higher score, then earlier EOS (shorter), then lexicographic ids.
template <class State>
bool hypothesis_before(const Hypothesis<State>& a, const Hypothesis<State>& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

/// Length-bounded beam search. `expand(state, y_prev)` returns the
/// log-probabilities of the next token together with the state after the
/// step; every child of a hypothesis shares that state. Each round keeps the
/// `beam_size` best extensions; extensions ending in EOS leave the beam and
/// are collected as finished.
template <class State, class Expand>
BeamResult<State> beam_search(std::shared_ptr<const State> initial, Expand&& expand,
                              const BeamConfig& cfg) {
  if (cfg.beam_size == 0 || cfg.depth == 0) {
    throw std::invalid_argument("beam_search: beam_size and depth must be >= 1");
  }
  struct Candidate {
    std::size_t parent;
    TokenId token;
    double score;
  };
  std::vector<Hypothesis<State>> live{{{}, 0.0, std::move(initial), false}};
  BeamResult<State> result;

  for (std::size_t d = 0; d < cfg.depth && !live.empty(); ++d) {
    std::vector<std::shared_ptr<const State>> next_states(live.size());
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      auto [logp, next] = expand(*live[h].state, live[h].last(cfg.bos));
      next_states[h] = std::make_shared<const State>(std::move(next));
      std::vector<TokenId> ids;
      for (TokenId w = 0; w < logp.size(); ++w)
        if (std::isfinite(static_cast<double>(logp[w]))) ids.push_back(w);
      // Only this hypothesis' top beam_size tokens can survive the global cut.
      if (ids.size() > cfg.beam_size) {
        std::nth_element(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cfg.beam_size),
                         ids.end(), [&](TokenId a, TokenId b) {
                           return logp[a] != logp[b] ? logp[a] > logp[b] : a < b;
                         });
        ids.resize(cfg.beam_size);
      }
      for (TokenId w : ids) cands.push_back({h, w, live[h].score + static_cast<double>(logp[w])});
    }
    auto better = [&](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      const bool ea = a.token == cfg.eos, eb = b.token == cfg.eos;
      if (ea != eb) return ea;
      const auto& ta = live[a.parent].tokens;
      const auto& tb = live[b.parent].tokens;
      if (ta != tb) return ta < tb;
      return a.token < b.token;
    };
    const std::size_t keep = std::min(cfg.beam_size, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      better);
    std::vector<Hypothesis<State>> next_live;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = cands[i];
      Hypothesis<State> hyp{live[c.parent].tokens, c.score, next_states[c.parent], false};
      hyp.tokens.push_back(c.token);
      if (c.token == cfg.eos) {
        hyp.finished = true;
        result.finished.push_back(std::move(hyp));
      } else {
        next_live.push_back(std::move(hyp));
      }
    }
    live = std::move(next_live);
  }
  std::sort(result.finished.begin(), result.finished.end(), hypothesis_before<State>);
  std::sort(live.begin(), live.end(), hypothesis_before<State>);
  result.unfinished = std::move(live);
  return result;
}

}  // namespace corrkg
