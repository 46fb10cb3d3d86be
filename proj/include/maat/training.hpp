#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/model.hpp"
#include "maat/ops.hpp"
#include "maat/params.hpp"
#include "maat/random.hpp"
#include "maat/scoring.hpp"
#include "maat/tape.hpp"

namespace maat {

struct TrainConfig {
  double lambda = 3.0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double lr_decay = 1.0;  // per-epoch multiplier; 1 keeps the rate fixed
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (!(lambda >= 0.0)) throw ConfigError("train config: lambda must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train config: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ConfigError("train config: betas must lie in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train config: eps must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("train config: lr_decay must lie in (0, 1]");
  }
};

// ------------------------------------------------------------------- Adam

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  static OptimizerState like(const ParamStore& p) {
    OptimizerState s;
    for (std::size_t i = 0; i < p.size(); ++i) {
      s.m.emplace_back(p.at(i).shape(), 0.0);
      s.v.emplace_back(p.at(i).shape(), 0.0);
    }
    return s;
  }

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term folded into the gradient
};

// One bias-corrected update of a single tensor; `step` is the 1-based count
// of updates including this one.
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, std::uint64_t step,
                        const AdamHyper& h) {
  if (param.shape() != grad.shape() || m.shape() != param.shape() || v.shape() != param.shape()) {
    throw DimensionError("adam_update: parameter " + to_string(param.shape()) + " vs gradient " +
                         to_string(grad.shape()));
  }
  if (step < 1) throw ContractError("adam_update: step counts from 1");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + h.weight_decay * param[i];
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    param[i] -= h.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.eps);
  }
}

inline void adam_step(ParamStore& params, const std::vector<Tensor>& grads, OptimizerState& state,
                      const AdamHyper& h) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ContractError("adam_step: gradient/state count does not match parameters");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) adam_update(params.at(i), grads[i], state.m[i], state.v[i], state.step, h);
}

// ------------------------------------------------------------------ minimax

enum class Phase { Minimize, Maximize };

inline std::string to_string(Phase p) { return p == Phase::Minimize ? "minimize" : "maximize"; }

struct LossRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  Phase phase = Phase::Minimize;
  double recon_loss = 0.0;
  double assdis_term = 0.0;  // signed, lambda-weighted; phase loss = recon_loss + assdis_term

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

// Both phase objectives on one shared forward pass.
//   minimize: recon + lambda * dis(P, stop(S))   prior pulled toward series
//   maximize: recon - lambda * dis(stop(P), S)   series pushed off the prior
struct PhaseLosses {
  ForwardVars forward;
  Var recon;
  Var dis_min;  // gradient reaches P only
  Var dis_max;  // gradient reaches S only
  Var loss_min;
  Var loss_max;
  std::vector<Var> series_frozen;
  std::vector<Var> prior_frozen;
};

inline PhaseLosses phase_losses(const Var& x, const ModelConfig& mcfg, const BoundParams& p, double lambda,
                                const ForwardMode& mode = {}) {
  Tape& tape = x.tape();
  PhaseLosses out;
  out.forward = forward(x, mcfg, p, mode);
  out.recon = ops::mse(out.forward.recon, x);
  for (std::size_t l = 0; l < out.forward.series.size(); ++l) {
    out.series_frozen.push_back(tape.detach(out.forward.series[l]));
    out.prior_frozen.push_back(tape.detach(out.forward.prior[l]));
  }
  out.dis_min = association_discrepancy_loss(out.forward.prior, out.series_frozen);
  out.dis_max = association_discrepancy_loss(out.prior_frozen, out.forward.series);
  out.loss_min = ops::add(out.recon, ops::scale(out.dis_min, lambda));
  out.loss_max = ops::sub(out.recon, ops::scale(out.dis_max, lambda));
  return out;
}

struct StepResult {
  LossRecord minimize;
  LossRecord maximize;
  std::vector<Tensor> grad_min;
  std::vector<Tensor> grad_max;
};

namespace detail {

inline void require_finite(const ParamStore& p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!p.at(i).all_finite()) throw DivergenceError("parameter '" + p.name(i) + "' became non-finite");
  }
}

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " is not finite");
}

}  // namespace detail

// One minimize update then one maximize update, both from gradients of the
// same forward pass. `observe` sees the forward pass before any update.
inline StepResult minimax_step(const Tensor& batch, ModelParams& params, OptimizerState& opt, const TrainConfig& cfg,
                               double lr, Rng* dropout_rng = nullptr,
                               const std::function<void(const ForwardVars&)>& observe = {}) {
  Tape tape;
  const BoundParams bound(tape, params.tensors, true);
  const Var x = tape.constant(batch);
  const PhaseLosses pl = phase_losses(x, params.config, bound, cfg.lambda, {true, dropout_rng});
  if (observe) observe(pl.forward);

  StepResult r;
  const double recon = pl.recon.value().item();
  detail::require_finite(recon, "reconstruction loss");
  r.minimize = {0, 0, Phase::Minimize, recon, cfg.lambda * pl.dis_min.value().item()};
  r.maximize = {0, 0, Phase::Maximize, recon, -cfg.lambda * pl.dis_max.value().item()};
  detail::require_finite(r.minimize.assdis_term, "discrepancy term");

  r.grad_min = bound.gradients(tape.backward(pl.loss_min));
  r.grad_max = bound.gradients(tape.backward(pl.loss_max));

  const AdamHyper h{lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay};
  adam_step(params.tensors, r.grad_min, opt, h);
  adam_step(params.tensors, r.grad_max, opt, h);
  detail::require_finite(params.tensors);
  return r;
}

// ---------------------------------------------------------------------- fit

struct FitResult {
  ModelParams params;
  std::vector<LossRecord> history;
};

// Raised when training diverges; carries the parameters from before the
// failing step and the history up to it.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, ModelParams stable, std::vector<LossRecord> history)
      : DivergenceError(what), last_stable(std::move(stable)), history(std::move(history)) {}

  ModelParams last_stable;
  std::vector<LossRecord> history;
};

struct FitHooks {
  std::function<void(const LossRecord&)> on_record;
  std::function<void(const ForwardVars&)> on_forward;
};

namespace detail {

inline Tensor gather_windows(const WindowBatch& wb, const std::vector<std::size_t>& order, std::size_t begin,
                             std::size_t end) {
  const std::size_t w = wb.windows.shape()[1];
  const std::size_t d = wb.windows.shape()[2];
  Tensor out({end - begin, w, d});
  const auto src = wb.windows.values();
  for (std::size_t b = begin; b < end; ++b) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(order[b] * w * d), w * d, &out[(b - begin) * w * d]);
  }
  return out;
}

// Fisher-Yates on the raw generator so the order is the same everywhere.
inline void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace detail

// Trains on non-overlapping windows of an already normalized series.
inline FitResult fit(const SeriesDataset& train, const TrainConfig& cfg, const ModelConfig& mcfg,
                     const FitHooks& hooks = {}) {
  cfg.validate();
  mcfg.validate();
  if (train.channels() != mcfg.input_dim) {
    throw DimensionError("fit: model expects d=" + std::to_string(mcfg.input_dim) + ", data has d=" +
                         std::to_string(train.channels()));
  }
  const WindowBatch wb = windows(train, mcfg.window, true);
  if (wb.count() == 0) {
    throw EmptyDatasetError("fit: series of length " + std::to_string(train.length()) + " holds no window of " +
                            std::to_string(mcfg.window));
  }

  FitResult res{init_params(mcfg), {}};
  res.params.norm = train.norm_stats;
  OptimizerState opt = OptimizerState::like(res.params.tensors);
  Rng order_rng(cfg.seed);
  Rng dropout_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  std::vector<std::size_t> order(wb.count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double lr = cfg.lr;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) detail::shuffle(order, order_rng);
    std::size_t batch = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size, ++batch) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const Tensor x = detail::gather_windows(wb, order, b0, b1);
      ModelParams stable = res.params;
      try {
        StepResult r = minimax_step(x, res.params, opt, cfg, lr, &dropout_rng, hooks.on_forward);
        for (LossRecord* rec : {&r.minimize, &r.maximize}) {
          rec->epoch = epoch;
          rec->batch = batch;
          res.history.push_back(*rec);
          if (hooks.on_record) hooks.on_record(*rec);
        }
      } catch (const DivergenceError& e) {
        throw TrainingDiverged("diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                                   ": " + e.what(),
                               std::move(stable), std::move(res.history));
      }
    }
    lr *= cfg.lr_decay;
  }
  return res;
}

// --------------------------------------------------------------- loss CSV

inline void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,batch,phase,recon_loss,assdis_term\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.batch << ',' << to_string(r.phase) << ',' << csv::format_real(r.recon_loss) << ','
        << csv::format_real(r.assdis_term) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline std::vector<LossRecord> read_loss_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || csv::trim(line) != "epoch,batch,phase,recon_loss,assdis_term") {
    throw FormatError(path + ": expected header epoch,batch,phase,recon_loss,assdis_term");
  }
  std::vector<LossRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    auto where = [&] { return path + ":" + std::to_string(line_no); };
    if (cells.size() != 5) throw FormatError(where() + ": expected 5 fields");
    LossRecord r;
    const auto epoch = csv::parse_real(cells[0]);
    const auto batch = csv::parse_real(cells[1]);
    const auto recon = csv::parse_real(cells[3]);
    const auto term = csv::parse_real(cells[4]);
    if (!epoch || !batch || !recon || !term || *epoch < 0 || *batch < 0) throw ParseError(where() + ": malformed row");
    if (cells[2] == "minimize") {
      r.phase = Phase::Minimize;
    } else if (cells[2] == "maximize") {
      r.phase = Phase::Maximize;
    } else {
      throw ParseError(where() + ": unknown phase '" + std::string(cells[2]) + "'");
    }
    r.epoch = static_cast<std::size_t>(*epoch);
    r.batch = static_cast<std::size_t>(*batch);
    r.recon_loss = *recon;
    r.assdis_term = *term;
    out.push_back(r);
  }
  return out;
}

// Per-batch reconstruction losses, one per minimize record, in file order.
inline std::vector<double> batch_losses(const std::vector<LossRecord>& history) {
  std::vector<double> out;
  for (const auto& r : history)
    if (r.phase == Phase::Minimize) out.push_back(r.recon_loss);
  return out;
}

}  // namespace maat
