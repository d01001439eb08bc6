#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "corrkg/corpus.hpp"
#include "corrkg/decoder.hpp"
#include "corrkg/encoder.hpp"
#include "corrkg/errors.hpp"
#include "corrkg/model.hpp"
#include "corrkg/params.hpp"

namespace corrkg {

struct TrainConfig {
  double lr = 1e-4;
  double clip = 0.1;
  double dropout = 0.5;
  std::size_t vocab_cap = 50000;
  std::size_t embed = 150;
  std::size_t hidden = 300;
  std::size_t max_phrases = 10;
  std::size_t max_source_len = 400;
  std::uint64_t seed = 1;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::size_t max_steps = 0;  // 0: no step limit
  Mode mode = Mode::kFull;

  void validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
    if (!(lr > 0)) fail("lr must be positive");
    if (!(clip > 0)) fail("clip must be positive");
    if (!(dropout >= 0 && dropout < 1)) fail("dropout must be in [0, 1)");
    if (vocab_cap < Vocab::kReserved) fail("vocab_cap below reserved block");
    if (embed == 0 || hidden == 0) fail("embed and hidden must be positive");
    if (max_phrases == 0 || max_source_len == 0) fail("max_phrases and max_source_len must be positive");
    if (max_epochs == 0 || patience == 0) fail("max_epochs and patience must be positive");
  }
};

/// total = mean over phrases of the summed token NLL of each phrase.
struct LossReport {
  double total = 0;
  std::vector<double> per_phrase;
  std::size_t token_count = 0;

  double token_nll() const {
    double s = std::accumulate(per_phrase.begin(), per_phrase.end(), 0.0);
    return token_count ? s / static_cast<double>(token_count) : 0.0;
  }
};

template <class T>
struct LossGraph {
  Var<T> loss;
  LossReport report;
};

/// Teacher-forced forward pass over all phrases of one instance, threading
/// coverage and review state from phrase to phrase in dataset order.
template <class T>
LossGraph<T> build_loss(const TrainingInstance& inst, const ModelWeights<T>& w, Mode mode,
                        const Dropout& dropout = {}) {
  if (inst.phrases.empty()) throw std::invalid_argument("build_loss: instance has no phrases");
  const std::size_t ext = w.out_bias.size() + inst.oov_words.size();
  DocumentContext<T> doc =
      make_document_context(encode(inst.source_ids, w, dropout), inst.source_ext_ids, ext, w);
  DecodeState<T> state = initial_decode_state<T>(doc.length());
  const Var<T> s0 = init_phrase_state(doc.encoding, w);

  LossGraph<T> g;
  Var<T> total;
  for (const auto& phrase : inst.phrases) {
    Var<T> s = s0;
    TokenId y_prev = Vocab::kBos;
    Var<T> phrase_loss;
    for (TokenId y : phrase) {
      StepOutput<T> step = decoder_step(y_prev, s, doc, state, w, mode, dropout);
      commit_step(state, s, step.attn, w, mode);
      Var<T> nll = neg_log_mass(step.logits, target_indices(y, doc));
      phrase_loss = phrase_loss.valid() ? add(phrase_loss, nll) : nll;
      s = step.state;
      y_prev = y;
    }
    g.report.per_phrase.push_back(static_cast<double>(phrase_loss.item()));
    g.report.token_count += phrase.size();
    total = total.valid() ? add(total, phrase_loss) : phrase_loss;
  }
  g.loss = scale(total, static_cast<T>(1.0 / static_cast<double>(inst.phrases.size())));
  g.report.total = static_cast<double>(g.loss.item());
  if (!std::isfinite(g.report.total)) {
    throw NumericError("non-finite loss on instance '" + inst.doc_id + "'");
  }
  return g;
}

/// Loss without gradients (eval mode: dropout off).
template <class T>
LossReport compute_loss(const TrainingInstance& inst, const ParamStore<T>& store, Mode mode) {
  Tape<T> tape(false);
  return build_loss(inst, bind_model(tape, store), mode).report;
}

struct StepReport {
  LossReport loss;
  double grad_norm = 0;     // before clipping
  double clipped_norm = 0;  // after clipping
};

/// forward, backward, global-norm clip, Adam.
template <class T>
StepReport train_step(const TrainingInstance& inst, ParamStore<T>& store, const TrainConfig& cfg,
                      std::mt19937_64& rng) {
  Tape<T> tape(true);
  const Dropout dropout{cfg.dropout, &rng};
  LossGraph<T> g = build_loss(inst, bind_model(tape, store), cfg.mode, dropout);
  tape.backward(g.loss);
  StepReport r;
  r.loss = g.report;
  r.grad_norm = clip_gradients(store, cfg.clip);
  if (!std::isfinite(r.grad_norm)) {
    throw NumericError("non-finite gradient on instance '" + inst.doc_id + "'");
  }
  r.clipped_norm = store.grad_norm();
  adam_step(store, AdamOptions{cfg.lr});
  return r;
}

template <class T>
double mean_loss(const std::vector<TrainingInstance>& data, const ParamStore<T>& store, Mode mode) {
  if (data.empty()) return 0.0;
  double acc = 0;
  for (const auto& inst : data) acc += compute_loss(inst, store, mode).total;
  return acc / static_cast<double>(data.size());
}

/// Stops once `patience` consecutive evaluations fail to improve on the best.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Returns true when `loss` is a new best.
  bool update(double loss) {
    ++evaluations_;
    if (loss < best_) {
      best_ = loss;
      best_eval_ = evaluations_;
      bad_ = 0;
      return true;
    }
    ++bad_;
    return false;
  }

  bool should_stop() const { return bad_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_evaluation() const { return best_eval_; }  // 1-based
  std::size_t evaluations() const { return evaluations_; }
  std::size_t bad_evaluations() const { return bad_; }

  std::string serialize() const {
    std::ostringstream out;
    out.precision(17);
    out << patience_ << ' ' << best_ << ' ' << best_eval_ << ' ' << evaluations_ << ' ' << bad_;
    return out.str();
  }
  static EarlyStopping deserialize(const std::string& s) {
    std::istringstream in(s);
    EarlyStopping e(1);
    std::string best;
    in >> e.patience_ >> best >> e.best_eval_ >> e.evaluations_ >> e.bad_;
    e.best_ = best == "inf" ? std::numeric_limits<double>::infinity() : std::stod(best);
    if (!in) throw DataError("early stopping: malformed state");
    return e;
  }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_eval_ = 0;
  std::size_t evaluations_ = 0;
  std::size_t bad_ = 0;
};

/// Resumable trainer state: completed epochs, RNG stream, early stopping.
struct TrainerState {
  std::uint64_t epoch = 0;
  std::mt19937_64 rng;
  EarlyStopping stopping{3};
  bool finished = false;

  std::string serialize() const {
    std::ostringstream out;
    out << "epoch " << epoch << '\n'
        << "finished " << finished << '\n'
        << "stopping " << stopping.serialize() << '\n'
        << "rng " << rng << '\n';
    return out.str();
  }

  static TrainerState deserialize(const std::string& text) {
    TrainerState st;
    std::istringstream in(text);
    std::string key;
    bool seen_rng = false;
    while (in >> key) {
      std::string rest;
      std::getline(in, rest);
      std::istringstream val(rest);
      if (key == "epoch") val >> st.epoch;
      else if (key == "finished") val >> st.finished;
      else if (key == "stopping") st.stopping = EarlyStopping::deserialize(rest);
      else if (key == "rng") { val >> st.rng; seen_rng = static_cast<bool>(val); }
    }
    if (!seen_rng) throw DataError("trainer state: missing rng");
    return st;
  }
};

struct StepLog {
  std::uint64_t step;
  std::string instance;
  double loss;
  double token_nll;
  double grad_norm;
  double wall_ms;
};

struct EpochLog {
  std::uint64_t epoch;
  double train_loss;
  double dev_loss;
  bool improved;
};

template <class T>
struct TrainHooks {
  std::function<void(const StepLog&)> on_step;
  /// Called after every dev evaluation with the current parameters.
  std::function<void(const EpochLog&, const ParamStore<T>&, const TrainerState&)> on_epoch;
};

template <class T>
struct TrainResult {
  ParamStore<T> best;
  std::vector<double> dev_history;
  std::uint64_t steps = 0;
  bool early_stopped = false;
};

inline TrainerState fresh_trainer_state(const TrainConfig& cfg) {
  TrainerState st;
  st.rng.seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  st.stopping = EarlyStopping(cfg.patience);
  return st;
}

/// Epoch loop: shuffle, one optimizer step per instance, dev evaluation at
/// the end of each epoch, early stopping on dev loss. `store` is updated in
/// place and ends as the last-step parameters; the best-dev snapshot is
/// returned.
template <class T>
TrainResult<T> train(const std::vector<TrainingInstance>& data,
                     const std::vector<TrainingInstance>& dev, const TrainConfig& cfg,
                     ParamStore<T>& store, TrainerState& state, const TrainHooks<T>& hooks = {}) {
  cfg.validate();
  if (data.empty()) throw DataError("train: empty training set");
  if (dev.empty()) throw DataError("train: empty dev set");
  TrainResult<T> result;
  result.best = store;
  std::vector<std::size_t> order(data.size());
  using clock = std::chrono::steady_clock;
  bool step_limit = false;
  while (!state.finished && state.epoch < cfg.max_epochs) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    double train_acc = 0;
    std::size_t seen = 0;
    for (std::size_t idx : order) {
      const auto t0 = clock::now();
      StepReport r = train_step(data[idx], store, cfg, state.rng);
      train_acc += r.loss.total;
      ++seen;
      if (hooks.on_step) {
        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        hooks.on_step({store.step(), data[idx].doc_id, r.loss.total, r.loss.token_nll(),
                       r.grad_norm, ms});
      }
      if (cfg.max_steps && store.step() >= cfg.max_steps) {
        step_limit = true;
        break;
      }
    }
    ++state.epoch;
    const double dev_loss = mean_loss(dev, store, cfg.mode);
    const bool improved = state.stopping.update(dev_loss);
    if (improved) result.best = store;
    result.dev_history.push_back(dev_loss);
    if (state.stopping.should_stop()) {
      result.early_stopped = true;
      state.finished = true;
    }
    if (step_limit) state.finished = true;
    if (hooks.on_epoch) {
      hooks.on_epoch({state.epoch, train_acc / static_cast<double>(seen), dev_loss, improved},
                     store, state);
    }
  }
  result.steps = store.step();
  return result;
}

}  // namespace corrkg
