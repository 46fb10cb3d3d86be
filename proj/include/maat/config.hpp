#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/model.hpp"
#include "maat/synth.hpp"
#include "maat/training.hpp"

namespace maat {

enum class ThresholdPool { TrainAndTest, TestOnly, TrainOnly };

inline std::string to_string(ThresholdPool p) {
  switch (p) {
    case ThresholdPool::TrainAndTest: return "train+test";
    case ThresholdPool::TestOnly: return "test";
    case ThresholdPool::TrainOnly: return "train";
  }
  return "?";
}

// Everything a command needs. Text form is one `key = value` per line, `#`
// starts a comment.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
  std::size_t synth_train_length = 2000;

  std::string train_csv;
  std::string test_csv;
  bool has_header = true;
  std::string label_column = "label";

  double anomaly_ratio = 0.5;
  bool point_adjust = false;
  ThresholdPool pool = ThresholdPool::TrainAndTest;
  double range_tau = 0.5;
  std::size_t score_batch = 128;

  std::string out_dir;
  std::uint64_t seed = 0;

  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::vector<std::string> keys() const;
  std::string dump() const;
};

namespace config_detail {

inline std::size_t as_count(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config '" + key + "': expected an integer, got '" + v + "'");
  if (n <= 0) throw ConfigError("config '" + key + "' must be positive, got " + v);
  return static_cast<std::size_t>(n);
}

inline std::uint64_t as_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("config '" + key + "': expected a non-negative integer, got '" + v + "'");
  return n;
}

inline double as_real(const std::string& key, const std::string& v) {
  const auto r = csv::parse_real(v);
  if (!r || !std::isfinite(*r)) throw ConfigError("config '" + key + "': expected a number, got '" + v + "'");
  return *r;
}

inline bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config '" + key + "': expected true/false, got '" + v + "'");
}

// "kind start duration [magnitude]; ..."
inline std::vector<Injection> parse_injections(const std::string& key, const std::string& v) {
  std::vector<Injection> out;
  std::stringstream items(v);
  for (std::string item; std::getline(items, item, ';');) {
    if (csv::trim(item).empty()) continue;
    std::istringstream fields(item);
    std::string kind;
    Injection inj;
    if (!(fields >> kind >> inj.start >> inj.duration)) {
      throw ConfigError("config '" + key + "': cannot parse injection '" + std::string(csv::trim(item)) + "'");
    }
    const auto k = parse_injection_kind(kind);
    if (!k) throw ConfigError("config '" + key + "': unknown injection kind '" + kind + "'");
    inj.kind = *k;
    if (double m; fields >> m) inj.magnitude = m;
    std::string rest;
    if (fields >> rest) throw ConfigError("config '" + key + "': trailing text in injection '" + item + "'");
    out.push_back(inj);
  }
  return out;
}

inline std::string format_injections(const std::vector<Injection>& injs) {
  std::string out;
  for (std::size_t i = 0; i < injs.size(); ++i) {
    if (i) out += "; ";
    out += to_string(injs[i].kind) + " " + std::to_string(injs[i].start) + " " + std::to_string(injs[i].duration) + " " +
           csv::format_real(injs[i].magnitude);
  }
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::map<std::string, Field>& fields() {
  using R = RunConfig;
  using S = const std::string&;
  auto count = [](std::size_t R::*outer) {
    return Field{[outer](R& c, S k, S v) { c.*outer = as_count(k, v); },
                 [outer](const R& c) { return std::to_string(c.*outer); }};
  };
  auto mcount = [](std::size_t ModelConfig::*m) {
    return Field{[m](R& c, S k, S v) { c.model.*m = as_count(k, v); },
                 [m](const R& c) { return std::to_string(c.model.*m); }};
  };
  auto mflag = [](bool ModelConfig::*m) {
    return Field{[m](R& c, S k, S v) { c.model.*m = as_bool(k, v); },
                 [m](const R& c) { return std::string(c.model.*m ? "true" : "false"); }};
  };
  auto treal = [](double TrainConfig::*m) {
    return Field{[m](R& c, S k, S v) { c.train.*m = as_real(k, v); },
                 [m](const R& c) { return csv::format_real(c.train.*m); }};
  };
  auto sreal = [](double SynthSpec::*m) {
    return Field{[m](R& c, S k, S v) { c.synth.*m = as_real(k, v); },
                 [m](const R& c) { return csv::format_real(c.synth.*m); }};
  };
  auto scount = [](std::size_t SynthSpec::*m) {
    return Field{[m](R& c, S k, S v) { c.synth.*m = as_count(k, v); },
                 [m](const R& c) { return std::to_string(c.synth.*m); }};
  };
  auto text = [](std::string R::*m) {
    return Field{[m](R& c, S, S v) { c.*m = v; }, [m](const R& c) { return c.*m; }};
  };

  static const std::map<std::string, Field> table = {
      {"window", mcount(&ModelConfig::window)},
      {"input_dim", mcount(&ModelConfig::input_dim)},
      {"d_model", mcount(&ModelConfig::d_model)},
      {"n_heads", mcount(&ModelConfig::n_heads)},
      {"e_layers", mcount(&ModelConfig::e_layers)},
      {"block_size", mcount(&ModelConfig::block_size)},
      {"d_state", mcount(&ModelConfig::d_state)},
      {"d_conv", mcount(&ModelConfig::d_conv)},
      {"expand", mcount(&ModelConfig::expand)},
      {"ffn_mult", mcount(&ModelConfig::ffn_mult)},
      {"dropout", Field{[](R& c, S k, S v) { c.model.dropout = as_real(k, v); },
                        [](const R& c) { return csv::format_real(c.model.dropout); }}},
      {"scale_by_d_model", mflag(&ModelConfig::scale_by_d_model)},
      {"final_norm", mflag(&ModelConfig::final_norm)},
      {"ssm_path", mflag(&ModelConfig::ssm_path)},

      {"lambda", treal(&TrainConfig::lambda)},
      {"lr", treal(&TrainConfig::lr)},
      {"beta1", treal(&TrainConfig::beta1)},
      {"beta2", treal(&TrainConfig::beta2)},
      {"adam_eps", treal(&TrainConfig::eps)},
      {"weight_decay", treal(&TrainConfig::weight_decay)},
      {"lr_decay", treal(&TrainConfig::lr_decay)},
      {"epochs", Field{[](R& c, S k, S v) { c.train.epochs = as_count(k, v); },
                       [](const R& c) { return std::to_string(c.train.epochs); }}},
      {"batch_size", Field{[](R& c, S k, S v) { c.train.batch_size = as_count(k, v); },
                           [](const R& c) { return std::to_string(c.train.batch_size); }}},
      {"shuffle", Field{[](R& c, S k, S v) { c.train.shuffle = as_bool(k, v); },
                        [](const R& c) { return std::string(c.train.shuffle ? "true" : "false"); }}},

      {"synth.length", scount(&SynthSpec::length)},
      {"synth.train_length", count(&RunConfig::synth_train_length)},
      {"synth.channels", scount(&SynthSpec::channels)},
      {"synth.components", scount(&SynthSpec::components)},
      {"synth.min_period", sreal(&SynthSpec::min_period)},
      {"synth.max_period", sreal(&SynthSpec::max_period)},
      {"synth.noise", sreal(&SynthSpec::noise)},
      {"synth.injections", Field{[](R& c, S k, S v) { c.synth.injections = parse_injections(k, v); },
                                 [](const R& c) { return format_injections(c.synth.injections); }}},

      {"train_csv", text(&RunConfig::train_csv)},
      {"test_csv", text(&RunConfig::test_csv)},
      {"has_header", Field{[](R& c, S k, S v) { c.has_header = as_bool(k, v); },
                           [](const R& c) { return std::string(c.has_header ? "true" : "false"); }}},
      {"label_column", text(&RunConfig::label_column)},

      {"anomaly_ratio", Field{[](R& c, S k, S v) { c.anomaly_ratio = as_real(k, v); },
                              [](const R& c) { return csv::format_real(c.anomaly_ratio); }}},
      {"point_adjust", Field{[](R& c, S k, S v) { c.point_adjust = as_bool(k, v); },
                             [](const R& c) { return std::string(c.point_adjust ? "true" : "false"); }}},
      {"threshold_pool", Field{[](R& c, S k, S v) {
                                 if (v == "train+test") c.pool = ThresholdPool::TrainAndTest;
                                 else if (v == "test") c.pool = ThresholdPool::TestOnly;
                                 else if (v == "train") c.pool = ThresholdPool::TrainOnly;
                                 else throw ConfigError("config '" + k + "': expected train+test, test or train");
                               },
                               [](const R& c) { return to_string(c.pool); }}},
      {"range_tau", Field{[](R& c, S k, S v) { c.range_tau = as_real(k, v); },
                          [](const R& c) { return csv::format_real(c.range_tau); }}},
      {"score_batch", count(&RunConfig::score_batch)},

      {"out_dir", text(&RunConfig::out_dir)},
      {"seed", Field{[](R& c, S k, S v) {
                       c.seed = as_u64(k, v);
                       c.model.seed = c.train.seed = c.synth.seed = c.seed;
                     },
                     [](const R& c) { return std::to_string(c.seed); }}},
  };
  return table;
}

}  // namespace config_detail

inline void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& table = config_detail::fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(*this, key, std::string(csv::trim(value)));
}

inline void RunConfig::validate() const {
  try {
    model.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  train.validate();
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("config 'dropout' must lie in [0, 1)");
  if (!(anomaly_ratio > 0.0 && anomaly_ratio < 100.0)) throw ConfigError("config 'anomaly_ratio' must lie in (0, 100)");
  if (!(range_tau > 0.0 && range_tau <= 1.0)) throw ConfigError("config 'range_tau' must lie in (0, 1]");
}

inline std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, f] : config_detail::fields()) out.push_back(k);
  return out;
}

inline std::string RunConfig::dump() const {
  std::string out;
  for (const auto& [k, f] : config_detail::fields()) out += k + " = " + f.get(*this) + "\n";
  return out;
}

inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "config") {
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string_view body = csv::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(csv::trim(body.substr(0, eq)));
    try {
      cfg.set(key, std::string(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

}  // namespace maat
