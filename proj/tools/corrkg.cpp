// corrkg: vocabulary, training, prediction and evaluation for correlated
// keyphrase generation.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "corrkg/checkpoint.hpp"
#include "corrkg/config.hpp"
#include "corrkg/corpus.hpp"
#include "corrkg/errors.hpp"
#include "corrkg/generate.hpp"
#include "corrkg/gradcheck.hpp"
#include "corrkg/metrics.hpp"
#include "corrkg/training.hpp"
#include "corrkg/version.hpp"

namespace fs = std::filesystem;
using namespace corrkg;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("-c,--config", opts.config_path, "key = value config file");
  cmd->add_option("--set", opts.overrides, "override one config key (key=value), repeatable");
}

/// Flag values win over --set, which wins over the config file.
RunConfig resolve_config(const CommonOptions& opts,
                         const std::vector<std::pair<std::string, std::string>>& flags) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg.load_file(opts.config_path);
  for (const auto& kv : opts.overrides) cfg.apply_override(kv);
  for (const auto& [k, v] : flags) cfg.set(k, v, "--" + k);
  return cfg;
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  const std::string& p = cfg.get(key);
  if (p.empty()) throw ConfigError("missing required setting '" + key + "'");
  return p;
}

ModelConfig model_config(const RunConfig& cfg, std::size_t vocab_size) {
  ModelConfig m;
  m.vocab_size = vocab_size;
  m.embed = cfg.integer("embed");
  m.hidden = cfg.integer("hidden");
  return m;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

// ---------------------------------------------------------------------------

int cmd_vocab(const std::string& data, std::size_t cap, const std::string& out) {
  const auto docs = read_documents(data);
  if (docs.empty()) throw DataError("corpus " + data + " has no documents");
  const Vocab v = build_vocab(vocab_streams(docs), cap);
  v.save(out);
  std::cerr << "vocab: " << v.size() << " tokens (" << Vocab::kReserved << " reserved) -> " << out << '\n';
  return 0;
}

std::vector<TrainingInstance> load_instances(const std::string& path, const Vocab& vocab,
                                             const TrainConfig& tc) {
  std::vector<TrainingInstance> out;
  for (const auto& doc : read_documents(path)) {
    if (doc.keyphrases.empty()) {
      std::cerr << "warning: " << path << ": document '" << doc.id << "' has no keyphrases, skipped\n";
      continue;
    }
    for (auto& inst : make_instances(doc, vocab, tc.max_phrases, tc.max_source_len)) {
      out.push_back(std::move(inst));
    }
  }
  if (out.empty()) throw DataError(path + ": no training instances");
  return out;
}

int cmd_train(const RunConfig& cfg, bool resume) {
  const TrainConfig tc = cfg.train_config();
  const Vocab vocab = Vocab::load(require_path(cfg, "vocab"));
  const fs::path dir = require_path(cfg, "run_dir");
  const std::string train_path = require_path(cfg, "train_data");
  const std::string dev_path = cfg.get("dev_data");
  if (dev_path.empty()) throw ConfigError("missing required setting 'dev_data'");
  if (!fs::exists(dev_path)) throw DataError("dev set " + dev_path + " does not exist");

  const auto data = load_instances(train_path, vocab, tc);
  const auto dev = load_instances(dev_path, vocab, tc);

  ParamStore<double> store = init_params<double>(model_param_specs(model_config(cfg, vocab.size())), tc.seed);
  TrainerState state = fresh_trainer_state(tc);
  const fs::path last = dir / "last.ckpt", best = dir / "best.ckpt", log_path = dir / "train.log";
  if (resume) {
    if (!fs::exists(last)) throw DataError("resume: no checkpoint at " + last.string());
    const CheckpointMeta meta = load_checkpoint(last.string(), store);
    if (meta.vocab_hash != vocab.hash()) throw DataError("resume: checkpoint was trained with a different vocabulary");
    state = TrainerState::deserialize(meta.trainer_state);
  } else {
    fs::create_directories(dir);
  }
  std::ofstream log(log_path, resume ? std::ios::app : std::ios::trunc);
  if (!log) throw DataError("cannot write " + log_path.string());

  const std::string echo = cfg.echo();
  auto meta_for = [&](const TrainerState& st) {
    return CheckpointMeta{echo, vocab.hash(), store.step(), st.serialize()};
  };
  TrainHooks<double> hooks;
  hooks.on_step = [&](const StepLog& s) {
    log << json{{"event", "step"}, {"step", s.step}, {"instance", s.instance}, {"loss", s.loss},
                {"token_nll", s.token_nll}, {"grad_norm", s.grad_norm}, {"wall_ms", s.wall_ms}}
               .dump()
        << '\n';
  };
  hooks.on_epoch = [&](const EpochLog& e, const ParamStore<double>& p, const TrainerState& st) {
    log << json{{"event", "epoch"}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                {"dev_loss", e.dev_loss}, {"improved", e.improved}}
               .dump()
        << '\n';
    log.flush();
    if (e.improved) save_checkpoint(best.string(), p, meta_for(st));
    save_checkpoint(last.string(), p, meta_for(st));
    std::cerr << "epoch " << e.epoch << " train " << e.train_loss << " dev " << e.dev_loss
              << (e.improved ? " (best)" : "") << '\n';
  };
  if (state.finished) {
    std::cerr << "train: run already finished\n";
    return 0;
  }
  TrainResult<double> r = train(data, dev, tc, store, state, hooks);
  save_checkpoint(last.string(), store, meta_for(state));
  if (!fs::exists(best)) save_checkpoint(best.string(), r.best, meta_for(state));
  std::cerr << "train: " << r.steps << " steps" << (r.early_stopped ? ", early stopped" : "") << '\n';
  return 0;
}

int cmd_predict(const RunConfig& flags_cfg, const std::string& checkpoint, const std::string& data,
                const std::string& out_path) {
  // Architecture comes from the checkpoint's own config echo; decoding
  // settings from the command line.
  const CheckpointMeta head = read_checkpoint_meta(checkpoint);
  RunConfig arch;
  arch.load_string(head.config_echo, checkpoint + " (config echo)");
  const Vocab vocab = Vocab::load(require_path(flags_cfg, "vocab"));
  if (head.vocab_hash != vocab.hash()) {
    throw DataError("predict: vocabulary hash " + hex64(vocab.hash()) + " does not match checkpoint " +
                    hex64(head.vocab_hash));
  }
  ParamStore<double> store = init_params<double>(model_param_specs(model_config(arch, vocab.size())), 0);
  load_checkpoint(checkpoint, store);
  const GenerationConfig gc = flags_cfg.generation_config();
  const std::size_t max_len = flags_cfg.integer("max_source_len");

  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write " + out_path);
  std::size_t n = 0;
  for (const auto& doc : read_documents(data)) {
    const TrainingInstance src = make_source_instance(doc, vocab, max_len);
    const GenerationResult g = generate_keyphrases(src, store, vocab, gc);
    json phrases = json::array(), scores = json::array(), unfinished = json::array();
    for (const auto& p : g.phrases) {
      phrases.push_back(p.text());
      scores.push_back(p.score);
      unfinished.push_back(p.unfinished);
    }
    out << json{{"id", doc.id}, {"phrases", phrases}, {"scores", scores}, {"unfinished", unfinished}}.dump()
        << '\n';
    ++n;
  }
  json meta{{"version", kVersion},
            {"config", flags_cfg.echo()},
            {"checkpoint_config", head.config_echo},
            {"checkpoint_step", head.step},
            {"seed", arch.get("seed")},
            {"vocab_hash", hex64(vocab.hash())}};
  std::ofstream(out_path + ".meta.json") << meta.dump(2) << '\n';
  std::cerr << "predict: " << n << " documents -> " << out_path << '\n';
  return 0;
}

struct Prediction {
  std::string id;
  std::vector<std::string> phrases;
};

std::vector<Prediction> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read predictions " + path);
  std::vector<Prediction> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Prediction p;
      p.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      p.phrases = j.at("phrases").get<std::vector<std::string>>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError(path + ": line " + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

json mean_table(const std::map<std::size_t, MeanScore>& table) {
  json j = json::object();
  for (const auto& [k, m] : table) j[std::to_string(k)] = {{"value", m.value}, {"docs", m.docs}};
  return j;
}

int cmd_eval(const std::string& pred_path, const std::string& gold_path, const RunConfig& cfg,
             const std::string& out_path, const std::string& csv_path) {
  const std::vector<std::size_t> ks = cfg.ks();
  const double alpha = cfg.real("alpha");
  const auto preds = read_predictions(pred_path);
  const auto gold = read_documents(gold_path);
  std::map<std::string, const Document*> by_id;
  for (const auto& d : gold) by_id[d.id] = &d;
  std::vector<std::string> missing;
  std::map<std::string, const Prediction*> pred_by_id;
  for (const auto& p : preds) {
    if (!by_id.count(p.id)) missing.push_back(p.id);
    pred_by_id[p.id] = &p;
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError("eval: prediction ids missing from gold: " + list);
  }

  std::vector<DocumentScores> scores;
  std::vector<std::string> ids;
  for (const auto& d : gold) {
    EvalPair pair;
    pair.source = stem_phrase(source_tokens(d));
    for (const auto& g : d.keyphrases) pair.gold.push_back(normalize_phrase(g));
    if (auto it = pred_by_id.find(d.id); it != pred_by_id.end()) {
      for (const auto& p : it->second->phrases) pair.predicted.push_back(normalize_phrase(p));
    }
    scores.push_back(evaluate_document(pair, ks, alpha));
    ids.push_back(d.id);
  }
  const EvalReport r = aggregate(scores, ks);
  json report{{"version", kVersion},
              {"docs", r.docs},
              {"present_gold", r.present_gold},
              {"absent_gold", r.absent_gold},
              {"alpha", alpha},
              {"ks", ks},
              {"precision_denominator", "min(k, number of present predictions)"},
              {"averaging", "macro over documents; documents where a metric is undefined are skipped"},
              {"f1_at", mean_table(r.f1_at)},
              {"precision_at", mean_table(r.precision_at)},
              {"recall_present_at", mean_table(r.recall_present_at)},
              {"r_at", mean_table(r.r_at)},
              {"ndcg_at", mean_table(r.ndcg_at)}};
  if (out_path.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    std::ofstream(out_path) << report.dump(2) << '\n';
  }
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path);
    if (!csv) throw DataError("cannot write " + csv_path);
    csv << "id,k,precision,recall,f1,r,ndcg\n";
    csv << std::setprecision(17);
    auto cell = [&](const auto& opt, auto get) {
      if (opt) csv << get(*opt);
    };
    for (std::size_t i = 0; i < scores.size(); ++i) {
      for (std::size_t k : ks) {
        const auto& s = scores[i];
        csv << '"' << ids[i] << '"' << ',' << k << ',';
        cell(s.f1_at.at(k), [](const PRF& p) { return p.precision; });
        csv << ',';
        cell(s.f1_at.at(k), [](const PRF& p) { return p.recall; });
        csv << ',';
        cell(s.f1_at.at(k), [](const PRF& p) { return p.f1; });
        csv << ',';
        cell(s.r_at.at(k), [](double x) { return x; });
        csv << ',';
        cell(s.ndcg_at.at(k), [](double x) { return x; });
        csv << '\n';
      }
    }
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  double worst = 0;
  for (const auto& r : run_gradcheck(seed)) {
    std::cout << to_string(r.mode) << ": max relative error " << std::scientific << r.max_rel_error
              << " over " << std::dec << r.entries << " entries (worst " << r.worst_param << ")\n";
    worst = std::max(worst, r.max_rel_error);
  }
  std::cout << "max relative error " << std::scientific << worst << '\n';
  return worst < tolerance ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Correlated keyphrase generation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  auto* vocab_cmd = app.add_subcommand("vocab", "Build a vocabulary from a JSONL corpus");
  std::string vocab_data, vocab_out;
  std::size_t vocab_cap = 50000;
  vocab_cmd->add_option("--data", vocab_data, "corpus JSONL")->required();
  vocab_cmd->add_option("--cap", vocab_cap, "vocabulary size including reserved tokens")->capture_default_str();
  vocab_cmd->add_option("-o,--out", vocab_out, "output vocabulary file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  CommonOptions train_opts;
  add_common(train_cmd, train_opts);
  std::string t_train, t_dev, t_vocab, t_run, t_mode;
  std::uint64_t t_seed = 0;
  bool t_resume = false;
  auto* o_train = train_cmd->add_option("--train", t_train, "training JSONL");
  auto* o_dev = train_cmd->add_option("--dev", t_dev, "dev JSONL");
  auto* o_tvocab = train_cmd->add_option("--vocab", t_vocab, "vocabulary file");
  auto* o_run = train_cmd->add_option("--run-dir", t_run, "directory for checkpoints and log");
  auto* o_tseed = train_cmd->add_option("--seed", t_seed, "run seed");
  auto* o_tmode = train_cmd->add_option("--mode", t_mode, "full, coverage_only, review_only or copy_only");
  train_cmd->add_flag("--resume", t_resume, "continue from <run-dir>/last.ckpt");

  auto* pred_cmd = app.add_subcommand("predict", "Generate keyphrases");
  CommonOptions pred_opts;
  add_common(pred_cmd, pred_opts);
  std::string p_ckpt, p_data, p_out, p_vocab, p_mode;
  std::size_t p_k = 0, p_beam = 0, p_depth = 0;
  bool p_dedup = false, p_joint = false;
  pred_cmd->add_option("--checkpoint", p_ckpt, "model checkpoint")->required();
  pred_cmd->add_option("--data", p_data, "documents JSONL")->required();
  pred_cmd->add_option("-o,--out", p_out, "predictions JSONL")->required();
  auto* o_pvocab = pred_cmd->add_option("--vocab", p_vocab, "vocabulary file");
  auto* o_pmode = pred_cmd->add_option("--mode", p_mode, "full, coverage_only, review_only or copy_only");
  auto* o_k = pred_cmd->add_option("-k,--num-phrases", p_k, "phrases per document (default 10)");
  auto* o_beam = pred_cmd->add_option("--beam-size", p_beam, "beam size");
  auto* o_depth = pred_cmd->add_option("--beam-depth", p_depth, "maximum phrase length incl. end token");
  auto* o_dedup = pred_cmd->add_flag("--dedup", p_dedup, "drop phrases contained in an earlier phrase");
  auto* o_joint = pred_cmd->add_flag("--joint-beam", p_joint, "experimental: all phrases from one beam");

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold keyphrases");
  CommonOptions eval_opts;
  add_common(eval_cmd, eval_opts);
  std::string e_pred, e_gold, e_out, e_csv, e_ks;
  double e_alpha = 0.5;
  eval_cmd->add_option("--pred", e_pred, "predictions JSONL")->required();
  eval_cmd->add_option("--gold", e_gold, "gold corpus JSONL")->required();
  auto* o_ks = eval_cmd->add_option("--k", e_ks, "comma-separated cutoffs (default 5,10)");
  auto* o_alpha = eval_cmd->add_option("--alpha", e_alpha, "alpha-NDCG redundancy penalty (default 0.5)");
  eval_cmd->add_option("-o,--out", e_out, "report JSON (stdout when omitted)");
  eval_cmd->add_option("--per-doc", e_csv, "per-document CSV");

  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradient");
  std::uint64_t g_seed = 1;
  double g_tol = 1e-4;
  gc_cmd->add_option("--seed", g_seed)->capture_default_str();
  gc_cmd->add_option("--tolerance", g_tol)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto flag = [](std::vector<std::pair<std::string, std::string>>& f, CLI::Option* o, const std::string& key,
                 const std::string& value) {
    if (o->count()) f.emplace_back(key, value);
  };

  try {
    if (*vocab_cmd) return cmd_vocab(vocab_data, vocab_cap, vocab_out);
    if (*train_cmd) {
      std::vector<std::pair<std::string, std::string>> f;
      flag(f, o_train, "train_data", t_train);
      flag(f, o_dev, "dev_data", t_dev);
      flag(f, o_tvocab, "vocab", t_vocab);
      flag(f, o_run, "run_dir", t_run);
      flag(f, o_tseed, "seed", std::to_string(t_seed));
      flag(f, o_tmode, "mode", t_mode);
      return cmd_train(resolve_config(train_opts, f), t_resume);
    }
    if (*pred_cmd) {
      std::vector<std::pair<std::string, std::string>> f;
      flag(f, o_pvocab, "vocab", p_vocab);
      flag(f, o_pmode, "mode", p_mode);
      flag(f, o_k, "num_phrases", std::to_string(p_k));
      flag(f, o_beam, "beam_size", std::to_string(p_beam));
      flag(f, o_depth, "beam_depth", std::to_string(p_depth));
      if (o_dedup->count()) f.emplace_back("dedup", "true");
      if (o_joint->count()) f.emplace_back("joint_beam", "true");
      return cmd_predict(resolve_config(pred_opts, f), p_ckpt, p_data, p_out);
    }
    if (*eval_cmd) {
      std::vector<std::pair<std::string, std::string>> f;
      flag(f, o_ks, "ks", e_ks);
      std::ostringstream a;
      a << std::setprecision(17) << e_alpha;
      flag(f, o_alpha, "alpha", a.str());
      return cmd_eval(e_pred, e_gold, resolve_config(eval_opts, f), e_out, e_csv);
    }
    if (*gc_cmd) return cmd_gradcheck(g_seed, g_tol);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
