#pragma once

// One step of the correlated decoder. Per document the decoder threads two
// pieces of state across every phrase it reads or writes:
//   coverage C  - running sum of source attention distributions,
//   review S    - every decoder state s_{t-1} consumed so far.
// Source attention scores are v^T tanh(W_h h_j + W_s s_{t-1} + w_c C_j + b),
// review scores are v'^T tanh(W'_h s_j + W'_s s_{t-1}). Generate and copy
// scores share a single softmax normalizer over |V| + T logits.

#include <stdexcept>
#include <vector>

#include "corrkg/autograd.hpp"
#include "corrkg/encoder.hpp"
#include "corrkg/gru.hpp"
#include "corrkg/model.hpp"
#include "corrkg/vocab.hpp"

namespace corrkg {

/// Per-document quantities that depend only on the encoding.
template <class T>
struct DocumentContext {
  SourceEncoding<T> encoding;
  Var<T> attn_keys;  // T x A: W_h h_j + b_attn
  Var<T> copy_gate;  // T x F: sigmoid(h_j^T W_c)
  std::vector<TokenId> source_ext_ids;
  std::size_t vocab_size = 0;
  std::size_t extended_size = 0;

  std::size_t length() const { return source_ext_ids.size(); }
};

template <class T>
DocumentContext<T> make_document_context(SourceEncoding<T> encoding,
                                         std::vector<TokenId> source_ext_ids,
                                         std::size_t extended_size, const ModelWeights<T>& w) {
  if (encoding.length() != source_ext_ids.size()) {
    throw std::invalid_argument("document context: encoding / source length mismatch");
  }
  DocumentContext<T> doc;
  doc.attn_keys = add_row(matmul_nt(encoding.memory, w.attn_memory), w.attn_bias);
  doc.copy_gate = sigmoid(matmul_nt(encoding.memory, w.copy_weight));
  doc.encoding = std::move(encoding);
  doc.source_ext_ids = std::move(source_ext_ids);
  doc.vocab_size = w.out_bias.size();
  doc.extended_size = extended_size;
  for (TokenId id : doc.source_ext_ids) {
    if (id >= extended_size) throw std::invalid_argument("document context: source id past extended vocab");
  }
  return doc;
}

template <class T>
struct DecodeState {
  Var<T> coverage;                  // C, length T
  std::vector<Var<T>> review;       // S
  std::vector<Var<T>> review_keys;  // W'_h s_j, filled only when review is active
  std::size_t steps = 0;
};

template <class T>
DecodeState<T> initial_decode_state(std::size_t source_len) {
  return {zeros<T>(source_len), {}, {}, 0};
}

template <class T>
struct StepOutput {
  Var<T> state;        // s_t
  Var<T> attn;         // alpha_t, length T
  Var<T> context_enc;  // c_E
  Var<T> context_rev;  // c_D
  Var<T> logits;       // |V| generate scores then T copy scores
};

template <class T>
struct SourceAttention {
  Var<T> context;
  Var<T> weights;
};

/// Coverage-aware attention over the encoder memory. With use_coverage off
/// the coverage vector is never read.
template <class T>
SourceAttention<T> source_attention(const DocumentContext<T>& doc, const Var<T>& s_prev,
                                    const Var<T>& coverage, const ModelWeights<T>& w,
                                    bool use_coverage) {
  if (coverage.size() != doc.length()) {
    throw std::invalid_argument("source_attention: coverage length " +
                                std::to_string(coverage.size()) + " != source length " +
                                std::to_string(doc.length()));
  }
  Var<T> pre = add_row(doc.attn_keys, matvec(w.attn_state, s_prev));
  if (use_coverage) pre = add_outer(pre, coverage, w.attn_coverage);
  Var<T> alpha = softmax(matvec(tanh(pre), w.attn_v));
  return {matvec_t(doc.encoding.memory, alpha), alpha};
}

/// Attention over earlier decoder states; the zero vector when S is empty.
template <class T>
Var<T> review_attention(const std::vector<Var<T>>& states, const std::vector<Var<T>>& keys,
                        const Var<T>& s_prev, const ModelWeights<T>& w) {
  if (states.empty()) return zeros<T>(s_prev.size());
  if (keys.size() != states.size()) throw std::invalid_argument("review_attention: keys/states mismatch");
  Var<T> pre = add_row(stack_rows(keys), matvec(w.review_state, s_prev));
  Var<T> beta = softmax(matvec(tanh(pre), w.review_v));
  return matvec_t(stack_rows(states), beta);
}

template <class T>
Var<T> init_phrase_state(const SourceEncoding<T>& enc, const ModelWeights<T>& w) {
  return tanh(add(matvec(w.init_weight, concat<T>({enc.final_fwd, enc.final_bwd})), w.init_bias));
}

template <class T>
Var<T> update_coverage(const Var<T>& coverage, const Var<T>& attn) {
  return add(coverage, attn);
}

template <class T>
StepOutput<T> decoder_step(TokenId y_prev, const Var<T>& s_prev, const DocumentContext<T>& doc,
                           const DecodeState<T>& state, const ModelWeights<T>& w, Mode mode,
                           const Dropout& dropout = {}) {
  if (y_prev >= doc.extended_size) {
    throw std::invalid_argument("decoder_step: token id " + std::to_string(y_prev) +
                                " outside extended vocabulary of " +
                                std::to_string(doc.extended_size));
  }
  const bool review = uses_review(mode);
  StepOutput<T> out;
  auto att = source_attention(doc, s_prev, state.coverage, w, uses_coverage(mode));
  out.attn = att.weights;
  out.context_enc = att.context;
  out.context_rev = review ? review_attention(state.review, state.review_keys, s_prev, w)
                           : zeros<T>(s_prev.size());

  Var<T> y = dropout(embed_token(w, y_prev));
  std::vector<Var<T>> contexts{out.context_enc};
  if (review) contexts.push_back(out.context_rev);
  out.state = gru_cell(y, s_prev, contexts, w.dec);

  Var<T> features = dropout(concat<T>({y, out.state, out.context_enc, out.context_rev}));
  Var<T> gen = add(matvec(w.out_weight, features), w.out_bias);
  Var<T> copy = matvec(doc.copy_gate, features);
  out.logits = concat<T>({gen, copy});
  return out;
}

/// Records a completed step: s_{t-1} joins S and alpha_t is added to C.
template <class T>
void commit_step(DecodeState<T>& state, const Var<T>& s_prev, const Var<T>& attn,
                 const ModelWeights<T>& w, Mode mode) {
  state.review.push_back(s_prev);
  if (uses_review(mode)) state.review_keys.push_back(matvec(w.review_memory, s_prev));
  state.coverage = update_coverage(state.coverage, attn);
  ++state.steps;
}

/// Logit positions whose softmax mass is p(y): the generate slot when y is in
/// the base vocabulary plus every source position holding y.
template <class T>
std::vector<std::size_t> target_indices(TokenId y, const DocumentContext<T>& doc) {
  std::vector<std::size_t> idx;
  if (y < doc.vocab_size) idx.push_back(y);
  for (std::size_t j = 0; j < doc.length(); ++j) {
    if (doc.source_ext_ids[j] == y) idx.push_back(doc.vocab_size + j);
  }
  if (idx.empty()) {
    throw std::invalid_argument("target_indices: token " + std::to_string(y) +
                                " is neither in the vocabulary nor in the source");
  }
  return idx;
}

template <class T>
struct ExtendedDistribution {
  std::vector<T> probs;      // over |V| + |oov|
  std::vector<T> gen_mass;
  std::vector<T> copy_mass;
};

/// Folds the shared softmax over [generate ; copy-by-position] into a
/// distribution over the extended vocabulary.
template <class T>
ExtendedDistribution<T> extended_distribution(const Var<T>& logits, const DocumentContext<T>& doc) {
  const std::size_t V = doc.vocab_size;
  if (logits.size() != V + doc.length()) throw std::invalid_argument("extended_distribution: logits size");
  const auto v = logits.value();
  T mx = v[0];
  for (T x : v) mx = std::max(mx, x);
  std::vector<T> e(v.size());
  T z{0};
  for (std::size_t i = 0; i < v.size(); ++i) z += (e[i] = std::exp(v[i] - mx));
  ExtendedDistribution<T> d;
  d.gen_mass.assign(doc.extended_size, T{0});
  d.copy_mass.assign(doc.extended_size, T{0});
  for (std::size_t i = 0; i < V; ++i) d.gen_mass[i] = e[i] / z;
  for (std::size_t j = 0; j < doc.length(); ++j) d.copy_mass[doc.source_ext_ids[j]] += e[V + j] / z;
  d.probs.resize(doc.extended_size);
  for (std::size_t i = 0; i < doc.extended_size; ++i) d.probs[i] = d.gen_mass[i] + d.copy_mass[i];
  return d;
}

/// log p over the extended vocabulary; -inf where the mass is zero.
template <class T>
std::vector<T> extended_log_probs(const Var<T>& logits, const DocumentContext<T>& doc) {
  auto d = extended_distribution(logits, doc);
  std::vector<T> out(d.probs.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(d.probs[i]);
  return out;
}

}  // namespace corrkg
