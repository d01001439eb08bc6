#pragma once

#include <vector>

#include "corrkg/autograd.hpp"
#include "corrkg/gru.hpp"
#include "corrkg/model.hpp"
#include "corrkg/vocab.hpp"

namespace corrkg {

template <class T>
struct SourceEncoding {
  Var<T> memory;     // T x 2H; row t = [fwd_t ; bwd_t]
  Var<T> final_fwd;  // H
  Var<T> final_bwd;  // H

  std::size_t length() const { return memory.rows(); }
};

/// Embedding lookup; ids outside the base vocabulary (copy ids) read the UNK
/// row.
template <class T>
Var<T> embed_token(const ModelWeights<T>& w, TokenId id) {
  const TokenId row = id < w.embedding.rows() ? id : Vocab::kUnk;
  return gather_row(w.embedding, row);
}

/// Bidirectional GRU from zero initial states.
template <class T>
SourceEncoding<T> encode(const std::vector<TokenId>& source_ids, const ModelWeights<T>& w,
                         const Dropout& dropout = {}) {
  if (source_ids.empty()) throw std::invalid_argument("encode: empty source sequence");
  const std::size_t len = source_ids.size();
  const std::size_t hidden = w.enc_fwd.recur_c.rows();

  std::vector<Var<T>> inputs;
  inputs.reserve(len);
  for (TokenId id : source_ids) inputs.push_back(dropout(embed_token(w, id)));

  std::vector<Var<T>> fwd(len), bwd(len);
  Var<T> s = zeros<T>(hidden);
  for (std::size_t t = 0; t < len; ++t) fwd[t] = s = gru_cell<T>(inputs[t], s, {}, w.enc_fwd);
  s = zeros<T>(hidden);
  for (std::size_t t = len; t-- > 0;) bwd[t] = s = gru_cell<T>(inputs[t], s, {}, w.enc_bwd);

  std::vector<Var<T>> rows;
  rows.reserve(len);
  for (std::size_t t = 0; t < len; ++t) rows.push_back(concat<T>({fwd[t], bwd[t]}));
  return {stack_rows(rows), fwd.back(), bwd.front()};
}

}  // namespace corrkg
