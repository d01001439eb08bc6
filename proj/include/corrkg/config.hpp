#pragma once

// Run configuration: a flat key = value file (TOML subset: comments, blank
// lines, [section] headers which are ignored, quoted or bare values) with
// per-key overrides. Precedence is override > file > default.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "corrkg/errors.hpp"
#include "corrkg/generate.hpp"
#include "corrkg/training.hpp"

namespace corrkg {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class RunConfig {
 public:
  RunConfig() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d{
        {"train_data", ""},     {"dev_data", ""},        {"vocab", ""},
        {"run_dir", ""},        {"lr", "0.0001"},        {"clip", "0.1"},
        {"dropout", "0.5"},     {"vocab_cap", "50000"},  {"embed", "150"},
        {"hidden", "300"},      {"max_phrases", "10"},   {"max_source_len", "400"},
        {"seed", "1"},          {"max_epochs", "50"},    {"patience", "3"},
        {"max_steps", "0"},     {"mode", "full"},        {"beam_size", "200"},
        {"beam_depth", "6"},    {"num_phrases", "10"},   {"dedup", "false"},
        {"joint_beam", "false"}, {"ks", "5,10"},         {"alpha", "0.5"},
    };
    return d;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    std::stringstream text;
    text << in.rdbuf();
    load_string(text.str(), path);
  }

  void load_string(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const std::string where = origin + ":" + std::to_string(no);
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty() || line.front() == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      set(trim(line.substr(0, eq)), unquote(trim(line.substr(eq + 1))), where);
    }
  }

  /// "key=value" as given on the command line.
  void apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "': expected key=value");
    set(trim(kv.substr(0, eq)), unquote(trim(kv.substr(eq + 1))), "override");
  }

  void set(const std::string& key, const std::string& value, const std::string& where = "") {
    if (!defaults().count(key)) {
      throw ConfigError((where.empty() ? "" : where + ": ") + "unknown config key '" + key + "'");
    }
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }

  std::uint64_t integer(const std::string& key) const {
    const std::string& s = get(key);
    try {
      std::size_t used = 0;
      if (!s.empty() && s.front() != '-') {
        unsigned long long v = std::stoull(s, &used);
        if (used == s.size()) return v;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + s + "'");
  }

  bool boolean(const std::string& key) const {
    const std::string& s = get(key);
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + s + "'");
  }

  std::vector<std::size_t> ks() const {
    std::vector<std::size_t> out;
    std::stringstream in(get("ks"));
    std::string item;
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos || std::stoull(item) == 0) {
        throw ConfigError("config key 'ks': expected comma-separated positive integers");
      }
      out.push_back(std::stoull(item));
    }
    if (out.empty()) throw ConfigError("config key 'ks': empty");
    return out;
  }

  Mode mode() const {
    try {
      return parse_mode(get("mode"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.lr = real("lr");
    c.clip = real("clip");
    c.dropout = real("dropout");
    c.vocab_cap = integer("vocab_cap");
    c.embed = integer("embed");
    c.hidden = integer("hidden");
    c.max_phrases = integer("max_phrases");
    c.max_source_len = integer("max_source_len");
    c.seed = integer("seed");
    c.max_epochs = integer("max_epochs");
    c.patience = integer("patience");
    c.max_steps = integer("max_steps");
    c.mode = mode();
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return c;
  }

  GenerationConfig generation_config() const {
    GenerationConfig g;
    g.beam_size = integer("beam_size");
    g.beam_depth = integer("beam_depth");
    g.num_phrases = integer("num_phrases");
    g.dedup_filter = boolean("dedup");
    g.joint_beam = boolean("joint_beam");
    g.mode = mode();
    try {
      g.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return g;
  }

  /// Every key in sorted order, one "key = value" line each.
  std::string echo() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }
  static std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\''))) {
      return s.substr(1, s.size() - 2);
    }
    return s;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace corrkg
