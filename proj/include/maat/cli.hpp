#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maat/checkpoint.hpp"
#include "maat/config.hpp"
#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/metrics.hpp"
#include "maat/scoring.hpp"
#include "maat/synth.hpp"
#include "maat/training.hpp"

// Command-line front end. Every command is a function returning an exit code
// (0 ok, 1 usage or input error, 2 divergence) so tests can run it in-process.
namespace maat::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitDiverged = 2;

inline constexpr const char* kRunRootEnv = "MAAT_RUN_ROOT";

namespace fs = std::filesystem;

// --out wins, then out_dir from the config, then
// $MAAT_RUN_ROOT/<timestamp>-seed<seed>.
inline fs::path run_directory(const RunConfig& cfg) {
  fs::path dir;
  if (!cfg.out_dir.empty()) {
    dir = cfg.out_dir;
  } else {
    const char* root = std::getenv(kRunRootEnv);
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream name;
    name << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-seed" << cfg.seed;
    dir = fs::path(root && *root ? root : "runs") / name.str();
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  return dir;
}

// Loads a series, picking up the label column when the header names one.
inline SeriesDataset load_series(const std::string& path, const RunConfig& cfg) {
  if (!cfg.has_header) return load_csv(path, false);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  std::getline(in, header);
  bool labelled = false;
  for (auto cell : csv::split(header)) labelled = labelled || cell == cfg.label_column;
  return labelled ? load_csv(path, true, cfg.label_column) : load_csv(path, true);
}

// ------------------------------------------------------------------ synth

inline int cmd_synth(const RunConfig& cfg, std::ostream& out) {
  SynthSpec test_spec = cfg.synth;
  test_spec.origin = cfg.synth_train_length;
  SynthSpec train_spec = cfg.synth;
  train_spec.length = cfg.synth_train_length;
  train_spec.injections.clear();
  validate(test_spec);

  const SeriesDataset train = synth_generate(train_spec);
  const SeriesDataset test = synth_generate(test_spec);
  const fs::path dir = run_directory(cfg);
  save_csv(train, (dir / "train.csv").string());
  save_csv(test, (dir / "test.csv").string());

  std::size_t anomalous = 0;
  for (auto l : *test.labels) anomalous += l;
  out << "train: " << train.length() << " rows x " << train.channels() << " channels -> " << (dir / "train.csv").string()
      << "\n";
  out << "test: " << test.length() << " rows, " << test_spec.injections.size() << " injections, " << anomalous
      << " anomalous rows -> " << (dir / "test.csv").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ train

inline int cmd_train(RunConfig cfg, std::ostream& out, std::ostream& err) {
  if (cfg.train_csv.empty()) throw ConfigError("train: no training data given (train_csv)");
  const SeriesDataset raw = load_series(cfg.train_csv, cfg);
  cfg.model.input_dim = raw.channels();
  cfg.validate();
  const SeriesDataset train = normalize(raw);
  const fs::path dir = run_directory(cfg);
  {
    std::ofstream c(dir / "config.txt");
    c << cfg.dump();
  }
  const std::size_t n_windows = train.length() / cfg.model.window;
  out << "training on " << train.length() << " rows (" << n_windows << " windows of " << cfg.model.window << "), "
      << cfg.train.epochs << " epochs\n";

  try {
    FitHooks hooks;
    hooks.on_record = [&](const LossRecord& r) {
      if (r.phase == Phase::Maximize && r.batch == 0) {
        out << "epoch " << r.epoch << " recon_loss " << csv::format_real(r.recon_loss) << "\n";
      }
    };
    const FitResult res = fit(train, cfg.train, cfg.model, hooks);
    save_checkpoint(res.params, (dir / "checkpoint.bin").string());
    write_loss_csv(res.history, (dir / "loss.csv").string());
    out << "checkpoint -> " << (dir / "checkpoint.bin").string() << "\n";
    out << "loss history -> " << (dir / "loss.csv").string() << "\n";
    return kExitOk;
  } catch (const TrainingDiverged& e) {
    save_checkpoint(e.last_stable, (dir / "checkpoint.bin").string());
    write_loss_csv(e.history, (dir / "loss.csv").string());
    err << "error: " << e.what() << "\nlast stable checkpoint kept at " << (dir / "checkpoint.bin").string() << "\n";
    return kExitDiverged;
  }
}

// ------------------------------------------------------------------ score

struct ScoreReport {
  ScoreVector test;
  Labels raw_pred;
  Labels adjusted_pred;
  std::optional<Labels> truth;
};

inline SeriesDataset prepare(const SeriesDataset& raw, const ModelParams& params) {
  if (raw.channels() != params.config.input_dim) {
    throw DimensionError("checkpoint expects d=" + std::to_string(params.config.input_dim) + ", " + raw.name +
                         " has d=" + std::to_string(raw.channels()));
  }
  return normalize(raw, params.norm);
}

inline ScoreReport score_run(const RunConfig& cfg, const ModelParams& params) {
  if (cfg.test_csv.empty()) throw ConfigError("score: no test data given (test_csv)");
  const SeriesDataset test = prepare(load_series(cfg.test_csv, cfg), params);
  ScoreReport rep;
  rep.test = score_series(test, params, cfg.score_batch);

  std::vector<double> pool;
  if (cfg.pool != ThresholdPool::TestOnly) {
    if (cfg.train_csv.empty()) throw ConfigError("score: threshold pool '" + to_string(cfg.pool) + "' needs train_csv");
    const SeriesDataset train = prepare(load_series(cfg.train_csv, cfg), params);
    pool = score_series(train, params, cfg.score_batch).scores;
  }
  if (cfg.pool != ThresholdPool::TrainOnly) pool.insert(pool.end(), rep.test.scores.begin(), rep.test.scores.end());
  rep.test.threshold = threshold_from_ratio(pool, cfg.anomaly_ratio);

  rep.raw_pred = detect(rep.test.scores, *rep.test.threshold);
  rep.adjusted_pred = rep.raw_pred;
  if (test.labels) {
    rep.truth = Labels(test.labels->begin(), test.labels->begin() + static_cast<std::ptrdiff_t>(rep.test.size()));
    rep.adjusted_pred = point_adjust(rep.raw_pred, *rep.truth);
  }
  return rep;
}

inline void write_scores_csv(const ScoreReport& rep, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "position,score,threshold,raw_pred,adjusted_pred\n";
  const std::string tau = csv::format_real(*rep.test.threshold);
  for (std::size_t i = 0; i < rep.test.size(); ++i) {
    f << i << ',' << csv::format_real(rep.test.scores[i]) << ',' << tau << ',' << int(rep.raw_pred[i]) << ','
      << int(rep.adjusted_pred[i]) << '\n';
  }
  if (!f) throw IoError("failed writing " + path);
}

inline int cmd_score(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
  const ModelParams params = load_checkpoint(checkpoint);
  const ScoreReport rep = score_run(cfg, params);
  const fs::path dir = run_directory(cfg);
  write_scores_csv(rep, (dir / "scores.csv").string());
  std::size_t flagged = 0;
  for (auto p : rep.raw_pred) flagged += p;
  out << "scored " << rep.test.size() << " points, threshold " << csv::format_real(*rep.test.threshold) << ", "
      << flagged << " flagged\n";
  if (!rep.truth) out << "no labels in test data; adjusted_pred repeats raw_pred\n";
  out << "scores -> " << (dir / "scores.csv").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- eval

struct ScoresFile {
  std::vector<double> scores;
  std::vector<double> thresholds;
  Labels raw_pred;
};

inline ScoresFile read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "position,score,threshold,raw_pred,adjusted_pred") {
    throw FormatError(path + ": expected header position,score,threshold,raw_pred,adjusted_pred");
  }
  ScoresFile sf;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != 5) throw FormatError(where + ": expected 5 fields");
    const auto pos = csv::parse_real(cells[0]);
    const auto score = csv::parse_real(cells[1]);
    const auto tau = csv::parse_real(cells[2]);
    const auto pred = csv::parse_real(cells[3]);
    if (!pos || !score || !tau || !pred || (*pred != 0.0 && *pred != 1.0)) throw ParseError(where + ": malformed row");
    if (*pos != static_cast<double>(sf.scores.size())) {
      throw FormatError(where + ": positions must run 0, 1, 2, ... without gaps");
    }
    sf.scores.push_back(*score);
    sf.thresholds.push_back(*tau);
    sf.raw_pred.push_back(static_cast<std::uint8_t>(*pred));
  }
  return sf;
}

inline nlohmann::json to_json(const MetricBundle& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"aff_p", opt(m.aff_p)},  {"aff_r", opt(m.aff_r)},        {"r_a_r", opt(m.r_a_r)}, {"r_a_p", opt(m.r_a_p)},
          {"v_roc", opt(m.v_roc)},  {"v_pr", opt(m.v_pr)}};
}

struct EvalReport {
  MetricBundle raw;
  MetricBundle adjusted;
  VolumeScores volume;
};

inline EvalReport evaluate_scores(const ScoresFile& sf, const Labels& truth_full, double tau) {
  if (truth_full.size() < sf.scores.size()) {
    throw ContractError("eval: " + std::to_string(sf.scores.size()) + " scored points but only " +
                        std::to_string(truth_full.size()) + " labels");
  }
  const Labels truth(truth_full.begin(), truth_full.begin() + static_cast<std::ptrdiff_t>(sf.scores.size()));
  EvalReport rep;
  rep.raw = evaluate(sf.raw_pred, truth, sf.scores, tau);
  rep.adjusted = evaluate(point_adjust(sf.raw_pred, truth), truth, sf.scores, tau);
  rep.volume = volume_metrics(sf.scores, truth);
  return rep;
}

inline int cmd_eval(const RunConfig& cfg, const std::string& scores_path, const std::string& truth_path, bool curve,
                    std::ostream& out) {
  const ScoresFile sf = read_scores_csv(scores_path);
  const SeriesDataset truth_ds = load_series(truth_path, cfg);
  if (!truth_ds.labels) throw FormatError(truth_path + ": no '" + cfg.label_column + "' column");
  const EvalReport rep = evaluate_scores(sf, *truth_ds.labels, cfg.range_tau);

  nlohmann::json doc = {{"points", sf.scores.size()},
                        {"threshold", sf.thresholds.empty() ? nlohmann::json(nullptr) : nlohmann::json(sf.thresholds[0])},
                        {"range_tau", cfg.range_tau},
                        {"raw", to_json(rep.raw)},
                        {"adjusted", to_json(rep.adjusted)}};
  const fs::path dir = run_directory(cfg);
  {
    std::ofstream f(dir / "metrics.json");
    if (!f) throw IoError("cannot write " + (dir / "metrics.json").string());
    f << doc.dump(2) << "\n";
  }
  if (curve) {
    std::ofstream f(dir / "curve.csv");
    if (!f) throw IoError("cannot write " + (dir / "curve.csv").string());
    f << "threshold,fpr,tpr,precision\n";
    for (const auto& c : rep.volume.curve) {
      f << csv::format_real(c.threshold) << ',' << csv::format_real(c.fpr) << ',' << csv::format_real(c.tpr) << ','
        << csv::format_real(c.precision) << '\n';
    }
  }
  out << doc.dump(2) << "\n";
  return kExitOk;
}

// -------------------------------------------------------------- loss-diff

inline int cmd_loss_diff(const RunConfig& cfg, const std::string& baseline_path, const std::string& model_path,
                         std::ostream& out) {
  const std::vector<double> base = batch_losses(read_loss_csv(baseline_path));
  const std::vector<double> model = batch_losses(read_loss_csv(model_path));
  if (base.size() != model.size()) {
    throw ContractError("loss-diff: " + baseline_path + " has " + std::to_string(base.size()) + " batches, " +
                        model_path + " has " + std::to_string(model.size()));
  }
  const std::vector<double> delta = loss_differential(base, model);
  const fs::path dir = run_directory(cfg);
  std::ofstream f(dir / "loss_diff.csv");
  if (!f) throw IoError("cannot write " + (dir / "loss_diff.csv").string());
  f << "batch,L_AT,L_MAAT,delta\n";
  std::size_t lower = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    f << i << ',' << csv::format_real(base[i]) << ',' << csv::format_real(model[i]) << ',' << csv::format_real(delta[i])
      << '\n';
    lower += delta[i] > 0.0;
  }
  out << delta.size() << " batches, second run lower on " << lower << "\n";
  out << "loss differential -> " << (dir / "loss_diff.csv").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- main

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"MAAT time series anomaly detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value configuration file");
    sub->add_option("-s,--set", overrides, "override one key, key=value (repeatable)");
    sub->add_option("-o,--out", out_dir, "output directory (default $MAAT_RUN_ROOT/<time>-seed<seed>)");
  };

  auto* synth = app.add_subcommand("synth", "generate a labelled synthetic train/test pair");
  common(synth);

  std::string train_path, test_path;
  auto* train = app.add_subcommand("train", "fit a model, write checkpoint and loss history");
  common(train);
  train->add_option("--train", train_path, "training series CSV");

  std::string checkpoint;
  auto* score = app.add_subcommand("score", "score a series with a checkpoint");
  common(score);
  score->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  score->add_option("--test", test_path, "series to score");
  score->add_option("--train", train_path, "training series, joins the threshold pool");

  std::string scores_path, truth_path;
  bool curve = false;
  auto* eval = app.add_subcommand("eval", "metrics for a scores CSV against labels");
  common(eval);
  eval->add_option("--scores", scores_path, "scores CSV from `score`")->required();
  eval->add_option("--truth", truth_path, "labelled series CSV")->required();
  eval->add_flag("--curve", curve, "also write the volume curve points");

  std::string baseline_loss, model_loss;
  auto* diff = app.add_subcommand("loss-diff", "per-batch log loss difference of two runs");
  common(diff);
  diff->add_option("--baseline", baseline_loss, "loss CSV of the baseline run")->required();
  diff->add_option("--model", model_loss, "loss CSV of the compared run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInput;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(std::string(csv::trim(kv.substr(0, eq))), kv.substr(eq + 1));
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!train_path.empty()) cfg.train_csv = train_path;
    if (!test_path.empty()) cfg.test_csv = test_path;
    cfg.validate();

    if (*synth) return cmd_synth(cfg, out);
    if (*train) return cmd_train(cfg, out, err);
    if (*score) return cmd_score(cfg, checkpoint, out);
    if (*eval) return cmd_eval(cfg, scores_path, truth_path, curve, out);
    if (*diff) return cmd_loss_diff(cfg, baseline_loss, model_loss, out);
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace maat::cli
