#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corrkg/autograd.hpp"
#include "corrkg/gru.hpp"
#include "corrkg/params.hpp"

namespace corrkg {

/// Which correlation mechanisms are active. copy_only is the plain
/// attention + copy decoder; coverage_only and review_only are the ablations.
enum class Mode { kFull, kCoverageOnly, kReviewOnly, kCopyOnly };

inline bool uses_coverage(Mode m) { return m == Mode::kFull || m == Mode::kCoverageOnly; }
inline bool uses_review(Mode m) { return m == Mode::kFull || m == Mode::kReviewOnly; }

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::kFull: return "full";
    case Mode::kCoverageOnly: return "coverage_only";
    case Mode::kReviewOnly: return "review_only";
    case Mode::kCopyOnly: return "copy_only";
  }
  return "full";
}

inline Mode parse_mode(const std::string& s) {
  if (s == "full") return Mode::kFull;
  if (s == "coverage_only") return Mode::kCoverageOnly;
  if (s == "review_only") return Mode::kReviewOnly;
  if (s == "copy_only") return Mode::kCopyOnly;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

/// Architecture dimensions. The parameter set is the same for every Mode so a
/// checkpoint can be decoded under any ablation.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed = 150;
  std::size_t hidden = 300;

  std::size_t attn() const { return hidden; }
  std::size_t memory() const { return 2 * hidden; }
  /// [embed(y_prev); s_t; c_E; c_D]
  std::size_t features() const { return embed + hidden + memory() + hidden; }

  std::string echo() const {
    std::ostringstream out;
    out << "vocab_size=" << vocab_size << "\nembed=" << embed << "\nhidden=" << hidden << '\n';
    return out.str();
  }
};

inline std::vector<ParamSpec> model_param_specs(const ModelConfig& c) {
  if (c.vocab_size == 0 || c.embed == 0 || c.hidden == 0) {
    throw std::invalid_argument("model config: dimensions must be positive");
  }
  const std::size_t H = c.hidden, A = c.attn(), M = c.memory(), F = c.features();
  std::vector<ParamSpec> specs{{"embedding", {c.vocab_size, c.embed}}};
  for (auto& s : gru_param_specs("enc.fwd", c.embed, H, {})) specs.push_back(s);
  for (auto& s : gru_param_specs("enc.bwd", c.embed, H, {})) specs.push_back(s);
  specs.push_back({"init.weight", {H, M}});
  specs.push_back({"init.bias", {H}});
  specs.push_back({"attn.memory", {A, M}});
  specs.push_back({"attn.state", {A, H}});
  specs.push_back({"attn.bias", {A}});
  specs.push_back({"attn.coverage", {A}});
  specs.push_back({"attn.v", {A}});
  specs.push_back({"review.memory", {A, H}});
  specs.push_back({"review.state", {A, H}});
  specs.push_back({"review.v", {A}});
  for (auto& s : gru_param_specs("dec", c.embed, H, {M, H})) specs.push_back(s);
  specs.push_back({"out.weight", {c.vocab_size, F}});
  specs.push_back({"out.bias", {c.vocab_size}});
  specs.push_back({"copy.weight", {F, M}});
  return specs;
}

template <class T>
struct ModelWeights {
  Var<T> embedding;
  GruWeights<T> enc_fwd, enc_bwd;
  Var<T> init_weight, init_bias;
  Var<T> attn_memory, attn_state, attn_bias, attn_coverage, attn_v;
  Var<T> review_memory, review_state, review_v;
  GruWeights<T> dec;  // context0 = c_E, context1 = c_D
  Var<T> out_weight, out_bias;
  Var<T> copy_weight;
};

template <class T, class Store>
ModelWeights<T> bind_model(Tape<T>& tape, Store& store) {
  auto p = [&](const char* name) { return store.bind(tape, name); };
  ModelWeights<T> w;
  w.embedding = p("embedding");
  w.enc_fwd = bind_gru<T>(tape, store, "enc.fwd", 0);
  w.enc_bwd = bind_gru<T>(tape, store, "enc.bwd", 0);
  w.init_weight = p("init.weight");
  w.init_bias = p("init.bias");
  w.attn_memory = p("attn.memory");
  w.attn_state = p("attn.state");
  w.attn_bias = p("attn.bias");
  w.attn_coverage = p("attn.coverage");
  w.attn_v = p("attn.v");
  w.review_memory = p("review.memory");
  w.review_state = p("review.state");
  w.review_v = p("review.v");
  w.dec = bind_gru<T>(tape, store, "dec", 2);
  w.out_weight = p("out.weight");
  w.out_bias = p("out.bias");
  w.copy_weight = p("copy.weight");
  return w;
}

/// Inverted dropout. Inactive when rate is 0 or no generator is attached.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }

  template <class T>
  Var<T> operator()(const Var<T>& x) const {
    if (!active()) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    const T kept = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(x.size());
    for (T& m : mask) m = keep(*rng) ? kept : T{0};
    return apply_mask(x, std::move(mask));
  }
};

}  // namespace corrkg
