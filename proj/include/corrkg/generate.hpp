#pragma once

// Multi-phrase generation. Phrases are emitted one at a time; each is the
// best novel hypothesis of its own beam search, and only the committed
// winner's attention and decoder states are folded into the document's
// coverage vector and review set before the next phrase is searched.

#include <algorithm>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "corrkg/beam.hpp"
#include "corrkg/corpus.hpp"
#include "corrkg/decoder.hpp"
#include "corrkg/encoder.hpp"
#include "corrkg/model.hpp"
#include "corrkg/params.hpp"

namespace corrkg {

struct GenerationConfig {
  std::size_t beam_size = 200;
  std::size_t beam_depth = 6;
  std::size_t num_phrases = 10;
  bool dedup_filter = false;
  bool joint_beam = false;  // experimental: all phrases from one beam pass
  Mode mode = Mode::kFull;

  void validate() const {
    if (beam_size == 0 || beam_depth == 0 || num_phrases == 0) {
      throw std::invalid_argument("generation config: beam_size, beam_depth, num_phrases must be >= 1");
    }
  }
};

/// Decoder state carried by one beam hypothesis: its own s_t plus the
/// document state with this hypothesis' pending steps already applied.
template <class T>
struct PhraseState {
  Var<T> s;
  DecodeState<T> doc_state;
};

template <class T>
using PhraseBeam = BeamResult<PhraseState<T>>;

/// Beam search for one phrase starting from the committed document state.
template <class T>
PhraseBeam<T> generate_phrase(const DocumentContext<T>& doc, const DecodeState<T>& committed,
                              const Var<T>& s0, const ModelWeights<T>& w,
                              const GenerationConfig& cfg) {
  auto init = std::make_shared<const PhraseState<T>>(PhraseState<T>{s0, committed});
  auto expand = [&](const PhraseState<T>& st, TokenId y_prev) {
    StepOutput<T> step = decoder_step(y_prev, st.s, doc, st.doc_state, w, cfg.mode);
    PhraseState<T> next{step.state, st.doc_state};
    commit_step(next.doc_state, st.s, step.attn, w, cfg.mode);
    return std::make_pair(extended_log_probs(step.logits, doc), std::move(next));
  };
  return beam_search(init, expand, BeamConfig{cfg.beam_size, cfg.beam_depth});
}

struct GeneratedPhrase {
  std::vector<std::string> tokens;
  double score = 0;
  bool unfinished = false;

  std::string text() const { return join_tokens(tokens); }
};

struct GenerationResult {
  std::vector<GeneratedPhrase> phrases;
  std::size_t total_steps = 0;   // decoder steps committed to the document
  double coverage_sum = 0;       // sum(C) at the end
  std::size_t review_size = 0;   // |S| at the end
};

/// Drops a phrase when its token sequence contains, or is contained in, an
/// earlier kept phrase as a contiguous run. First occurrence wins.
inline std::vector<std::vector<std::string>> dedup_filter(
    const std::vector<std::vector<std::string>>& phrases) {
  auto contains = [](const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
  };
  std::vector<std::vector<std::string>> kept;
  for (const auto& p : phrases) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const auto& k) {
      return contains(k, p) || contains(p, k);
    });
    if (!dup) kept.push_back(p);
  }
  return kept;
}

inline std::vector<GeneratedPhrase> dedup_filter(const std::vector<GeneratedPhrase>& phrases) {
  std::vector<std::vector<std::string>> toks;
  for (const auto& p : phrases) toks.push_back(p.tokens);
  const auto kept = dedup_filter(toks);
  std::vector<GeneratedPhrase> out;
  std::size_t k = 0;
  for (const auto& p : phrases) {
    if (k < kept.size() && p.tokens == kept[k]) {
      out.push_back(p);
      ++k;
    }
  }
  return out;
}

template <class T>
GenerationResult generate_keyphrases(const TrainingInstance& source, const ParamStore<T>& store,
                                     const Vocab& vocab, const GenerationConfig& cfg) {
  cfg.validate();
  Tape<T> tape(false);
  const ModelWeights<T> w = bind_model(tape, store);
  if (w.out_bias.size() != vocab.size()) {
    throw std::invalid_argument("generate_keyphrases: model vocabulary size " +
                                std::to_string(w.out_bias.size()) + " != vocab " +
                                std::to_string(vocab.size()));
  }
  const std::size_t ext = source.extended_size(vocab);
  const DocumentContext<T> doc =
      make_document_context(encode(source.source_ids, w), source.source_ext_ids, ext, w);
  const Var<T> s0 = init_phrase_state(doc.encoding, w);
  DecodeState<T> committed = initial_decode_state<T>(doc.length());

  GenerationResult result;
  std::set<std::string> emitted;
  auto body = [](const Hypothesis<PhraseState<T>>& h) {
    std::vector<TokenId> ids = h.tokens;
    if (h.finished) ids.pop_back();
    return ids;
  };
  // Nonempty hypotheses whose surface form has not been emitted, best first:
  // finished ones, then unfinished ones.
  auto novel = [&](const PhraseBeam<T>& beam) {
    std::vector<std::pair<const Hypothesis<PhraseState<T>>*, std::vector<std::string>>> out;
    for (const auto* list : {&beam.finished, &beam.unfinished}) {
      for (const auto& h : *list) {
        auto ids = body(h);
        if (ids.empty()) continue;
        auto words = render_tokens(ids, vocab, source.oov_words);
        if (emitted.count(join_tokens(words))) continue;
        out.emplace_back(&h, std::move(words));
      }
    }
    return out;
  };
  auto emit = [&](const Hypothesis<PhraseState<T>>& h, std::vector<std::string> words) {
    emitted.insert(join_tokens(words));
    result.phrases.push_back({std::move(words), h.score, !h.finished});
  };

  if (cfg.joint_beam) {
    const PhraseBeam<T> beam = generate_phrase(doc, committed, s0, w, cfg);
    for (auto& [h, words] : novel(beam)) {
      if (result.phrases.size() >= cfg.num_phrases) break;
      if (emitted.count(join_tokens(words))) continue;
      emit(*h, std::move(words));
    }
  } else {
    for (std::size_t k = 0; k < cfg.num_phrases; ++k) {
      const PhraseBeam<T> beam = generate_phrase(doc, committed, s0, w, cfg);
      auto choices = novel(beam);
      if (choices.empty()) break;
      auto& [h, words] = choices.front();
      committed = h->state->doc_state;
      emit(*h, std::move(words));
    }
  }

  result.total_steps = committed.steps;
  result.review_size = committed.review.size();
  for (T c : committed.coverage.value()) result.coverage_sum += static_cast<double>(c);
  if (cfg.dedup_filter) result.phrases = dedup_filter(result.phrases);
  return result;
}

}  // namespace corrkg
