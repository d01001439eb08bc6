#pragma once

#include <string>
#include <vector>

#include "corrkg/autograd.hpp"
#include "corrkg/params.hpp"

namespace corrkg {

/// Gate-packed GRU weights. Rows [0,H) are the reset gate, [H,2H) the update
/// gate and [2H,3H) the candidate.
template <class T>
struct GruWeights {
  Var<T> input;      // 3H x in
  Var<T> recur_rz;   // 2H x H
  Var<T> recur_c;    // H x H, applied to r * s_prev
  Var<T> bias;       // 3H
  std::vector<Var<T>> context;  // 3H x dim_k per extra context input
};

inline std::vector<ParamSpec> gru_param_specs(const std::string& prefix, std::size_t in,
                                              std::size_t hidden,
                                              const std::vector<std::size_t>& context_dims) {
  std::vector<ParamSpec> specs{
      {prefix + ".input", {3 * hidden, in}},
      {prefix + ".recur_rz", {2 * hidden, hidden}},
      {prefix + ".recur_c", {hidden, hidden}},
      {prefix + ".bias", {3 * hidden}},
  };
  for (std::size_t k = 0; k < context_dims.size(); ++k) {
    specs.push_back({prefix + ".context" + std::to_string(k), {3 * hidden, context_dims[k]}});
  }
  return specs;
}

template <class T, class Store>
GruWeights<T> bind_gru(Tape<T>& tape, Store& store, const std::string& prefix,
                       std::size_t num_contexts) {
  GruWeights<T> w{store.bind(tape, prefix + ".input"), store.bind(tape, prefix + ".recur_rz"),
                  store.bind(tape, prefix + ".recur_c"), store.bind(tape, prefix + ".bias"), {}};
  for (std::size_t k = 0; k < num_contexts; ++k) {
    w.context.push_back(store.bind(tape, prefix + ".context" + std::to_string(k)));
  }
  return w;
}

/// One GRU step:
///   r = sigmoid(W_r x + U_r s + sum_k C_r,k c_k)
///   z = sigmoid(W_z x + U_z s + sum_k C_z,k c_k)
///   s~ = tanh(W x + U (r * s) + sum_k C_k c_k)
///   s' = (1 - z) * s + z * s~
/// `contexts` may be shorter than w.context; missing contexts contribute
/// nothing (equivalent to a zero context vector).
template <class T>
Var<T> gru_cell(const Var<T>& x, const Var<T>& s_prev, const std::vector<Var<T>>& contexts,
                const GruWeights<T>& w) {
  const std::size_t hidden = s_prev.size();
  detail::require(w.input.rows() == 3 * hidden && w.input.cols() == x.size(), "gru_cell",
                  "input weights " + detail::dims(w.input) + " vs x " + detail::dims(x));
  detail::require(w.recur_rz.rows() == 2 * hidden && w.recur_rz.cols() == hidden, "gru_cell",
                  "recurrent weights do not match state size");
  detail::require(contexts.size() <= w.context.size(), "gru_cell", "too many contexts");

  Var<T> pre = add(matvec(w.input, x), w.bias);
  for (std::size_t k = 0; k < contexts.size(); ++k) {
    detail::require(w.context[k].cols() == contexts[k].size(), "gru_cell",
                    "context " + std::to_string(k) + " size mismatch");
    pre = add(pre, matvec(w.context[k], contexts[k]));
  }
  Var<T> rz = sigmoid(add(slice(pre, 0, 2 * hidden), matvec(w.recur_rz, s_prev)));
  Var<T> r = slice(rz, 0, hidden);
  Var<T> z = slice(rz, hidden, hidden);
  Var<T> cand = tanh(add(slice(pre, 2 * hidden, hidden), matvec(w.recur_c, hadamard(r, s_prev))));
  return add(hadamard(one_minus(z), s_prev), hadamard(z, cand));
}

}  // namespace corrkg
