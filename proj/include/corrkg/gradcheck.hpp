#pragma once

// Finite-difference check of the full loss on a toy configuration.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "corrkg/model.hpp"
#include "corrkg/params.hpp"
#include "corrkg/training.hpp"

namespace corrkg {

/// Denominator floor for the relative error. A central difference in double
/// at eps = 1e-5 resolves gradients only to about 2e-10 absolute (a few ulps
/// of a loss near 10, divided by 2 eps), so relative error is measured
/// against at least 1e-5.
inline constexpr double kGradcheckFloor = 1e-5;

struct GradcheckResult {
  Mode mode = Mode::kFull;
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t entries = 0;
};

/// Toy instance over `vocab` ids: `length` source tokens, the first `oov` of
/// them document-local, and `phrases` targets mixing vocabulary and source
/// tokens.
inline TrainingInstance toy_instance(std::mt19937_64& rng, std::size_t vocab, std::size_t length,
                                     std::size_t phrases, std::size_t oov) {
  TrainingInstance inst;
  inst.doc_id = "toy";
  std::uniform_int_distribution<TokenId> word(Vocab::kReserved, vocab - 1);
  for (std::size_t t = 0; t < length; ++t) {
    if (t < oov) {
      inst.oov_words.push_back("oov" + std::to_string(t));
      inst.source_ext_ids.push_back(vocab + t);
      inst.source_ids.push_back(Vocab::kUnk);
    } else {
      const TokenId id = word(rng);
      inst.source_ext_ids.push_back(id);
      inst.source_ids.push_back(id);
    }
  }
  std::uniform_int_distribution<std::size_t> pos(0, length - 1);
  for (std::size_t m = 0; m < phrases; ++m) {
    inst.phrases.push_back({inst.source_ext_ids[pos(rng)], word(rng), Vocab::kEos});
  }
  return inst;
}

inline GradcheckResult gradcheck_loss(const TrainingInstance& inst, ParamStore<double>& store,
                                      Mode mode, double eps = 1e-5) {
  store.zero_grad();
  {
    Tape<double> tape(true);
    tape.backward(build_loss(inst, bind_model(tape, store), mode).loss);
  }
  GradcheckResult r;
  r.mode = mode;
  for (auto& [name, p] : store) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + eps;
      const double up = compute_loss(inst, store, mode).total;
      p.value[i] = orig - eps;
      const double down = compute_loss(inst, store, mode).total;
      p.value[i] = orig;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = p.grad[i];
      const double err =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradcheckFloor});
      ++r.entries;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_param = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  store.zero_grad();
  return r;
}

/// Runs the check in every mode on vocab 20, embed 8, hidden 12, T = 7, M = 2.
inline std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed) {
  ModelConfig c;
  c.vocab_size = 20;
  c.embed = 8;
  c.hidden = 12;
  ParamStore<double> store = init_params<double>(model_param_specs(c), seed);
  std::mt19937_64 rng(seed);
  const TrainingInstance inst = toy_instance(rng, c.vocab_size, 7, 2, 2);
  std::vector<GradcheckResult> out;
  for (Mode m : {Mode::kFull, Mode::kCoverageOnly, Mode::kReviewOnly, Mode::kCopyOnly}) {
    out.push_back(gradcheck_loss(inst, store, m));
  }
  return out;
}

}  // namespace corrkg
