#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "maat/attention.hpp"
#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/ops.hpp"
#include "maat/params.hpp"
#include "maat/random.hpp"
#include "maat/ssm.hpp"
#include "maat/tape.hpp"

namespace maat {

struct ModelConfig {
  std::size_t window = 100;
  std::size_t input_dim = 1;
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t e_layers = 3;
  std::size_t block_size = 20;
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;
  std::size_t ffn_mult = 4;
  double dropout = 0.0;
  std::uint64_t seed = 0;
  bool scale_by_d_model = true;
  bool final_norm = true;
  // false drops the state-space skip path and the gate, leaving a plain
  // stack of attention layers (used for baseline loss comparisons).
  bool ssm_path = true;

  AttentionConfig attention() const { return {d_model, n_heads, block_size, dropout, scale_by_d_model}; }
  SsmConfig ssm() const { return {d_model, d_state, d_conv, expand}; }

  void validate() const {
    if (window == 0 || input_dim == 0 || d_model == 0 || n_heads == 0 || e_layers == 0 || block_size == 0 ||
        d_state == 0 || d_conv == 0 || expand == 0 || ffn_mult == 0) {
      throw ParameterError("model config: every dimension must be >= 1");
    }
    attention().validate();
    ssm().validate();
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// ------------------------------------------------------------- parameters

namespace detail {

inline Tensor uniform_tensor(Rng& rng, Shape shape, double bound) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

inline double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

inline std::string layer_prefix(std::size_t i) { return "layer" + std::to_string(i) + "."; }

inline void add_linear(ParamStore& p, Rng& rng, const std::string& name, std::size_t in, std::size_t out,
                       bool bias = true) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  p.add(name + ".w", uniform_tensor(rng, {in, out}, bound));
  if (bias) p.add(name + ".b", uniform_tensor(rng, {out}, bound));
}

inline void add_norm(ParamStore& p, const std::string& name, std::size_t d) {
  p.add(name + ".gamma", Tensor({d}, 1.0));
  p.add(name + ".beta", Tensor({d}, 0.0));
}

}  // namespace detail

struct ModelParams {
  ModelConfig config;
  ParamStore tensors;
  std::optional<NormStats> norm;  // training-set statistics, applied before scoring
};

// Deterministic in config.seed. Weights are uniform in +-1/sqrt(fan_in);
// gate biases start at 0 so the first blend is an even mix.
inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams mp{cfg, {}, std::nullopt};
  ParamStore& p = mp.tensors;
  const std::size_t dm = cfg.d_model;
  const SsmConfig sc = cfg.ssm();
  const std::size_t di = sc.d_inner();

  detail::add_linear(p, rng, "embed", cfg.input_dim, dm);
  for (std::size_t l = 0; l < cfg.e_layers; ++l) {
    const std::string pre = detail::layer_prefix(l);
    detail::add_linear(p, rng, pre + "attn.q", dm, dm);
    detail::add_linear(p, rng, pre + "attn.k", dm, dm);
    detail::add_linear(p, rng, pre + "attn.v", dm, dm);
    detail::add_linear(p, rng, pre + "attn.o", dm, dm);
    detail::add_linear(p, rng, pre + "attn.sigma", dm, cfg.n_heads);
    detail::add_norm(p, pre + "attn.norm", dm);
    detail::add_linear(p, rng, pre + "ffn.in", dm, cfg.ffn_mult * dm);
    detail::add_linear(p, rng, pre + "ffn.out", cfg.ffn_mult * dm, dm);
    detail::add_norm(p, pre + "ffn.norm", dm);
    if (!cfg.ssm_path) continue;

    detail::add_linear(p, rng, pre + "ssm.in_proj", dm, 2 * di, false);
    p.add(pre + "ssm.conv.w", detail::uniform_tensor(rng, {di, sc.d_conv}, 1.0 / std::sqrt(double(sc.d_conv))));
    p.add(pre + "ssm.conv.b", detail::uniform_tensor(rng, {di}, 1.0 / std::sqrt(double(sc.d_conv))));
    detail::add_linear(p, rng, pre + "ssm.x_proj", di, sc.dt_rank() + 2 * sc.d_state, false);
    p.add(pre + "ssm.dt_proj.w",
          detail::uniform_tensor(rng, {sc.dt_rank(), di}, 1.0 / std::sqrt(double(sc.dt_rank()))));
    Tensor dt_bias({di});
    for (double& v : dt_bias.data()) {
      const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
      v = detail::inverse_softplus(dt);
    }
    p.add(pre + "ssm.dt_proj.b", std::move(dt_bias));
    Tensor a_raw({di, sc.d_state});
    for (std::size_t d = 0; d < di; ++d)
      for (std::size_t n = 0; n < sc.d_state; ++n) a_raw[d * sc.d_state + n] = detail::inverse_softplus(double(n + 1));
    p.add(pre + "ssm.a_raw", std::move(a_raw));
    p.add(pre + "ssm.d_skip", Tensor({di}, 1.0));
    detail::add_linear(p, rng, pre + "ssm.out_proj", di, dm, false);
    detail::add_norm(p, pre + "skip_norm", dm);
    detail::add_linear(p, rng, pre + "gate", 2 * dm, dm);
    p.get(pre + "gate.b").fill(0.0);
  }
  if (cfg.final_norm) detail::add_norm(p, "final_norm", dm);
  detail::add_linear(p, rng, "head", dm, cfg.input_dim);
  return mp;
}

// ---------------------------------------------------------------- forward

struct GateOutput {
  Var x_adapt;
  Var g;
};

// g = sigmoid(W [x; x_skip] + b);  x_adapt = g ⊙ x_skip + (1 - g) ⊙ x
inline GateOutput gate(const Var& x, const Var& x_skip, const Var& w, const Var& b) {
  if (x.shape() != x_skip.shape()) {
    throw DimensionError("gate: x " + to_string(x.shape()) + " vs x_skip " + to_string(x_skip.shape()));
  }
  const Var g = ops::sigmoid(ops::linear(ops::concat_last(x, x_skip), w, b));
  const Var one_minus_g = ops::add_scalar(ops::scale(g, -1.0), 1.0);
  return {ops::add(ops::mul(g, x_skip), ops::mul(one_minus_g, x)), g};
}

// Fixed sinusoidal position code, [W, d_model].
inline Tensor positional_encoding(std::size_t window, std::size_t d_model) {
  Tensor pe({window, d_model});
  for (std::size_t t = 0; t < window; ++t) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(t) * freq;
      pe[t * d_model + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

struct BlockOutput {
  Var x_next;
  Var x_attn;  // main (attention) path
  Var x_skip;  // LayerNorm(x_mamba + x_orig); invalid without the SSM path
  Var g;
  AttentionOutput attention;
};

struct ForwardMode {
  bool training = false;
  Rng* rng = nullptr;  // required only when training with dropout
};

inline AttentionWeights attention_weights(const BoundParams& p, const std::string& pre) {
  return {p[pre + "attn.q.w"], p[pre + "attn.q.b"], p[pre + "attn.k.w"],     p[pre + "attn.k.b"],
          p[pre + "attn.v.w"], p[pre + "attn.v.b"], p[pre + "attn.o.w"],     p[pre + "attn.o.b"],
          p[pre + "attn.sigma.w"], p[pre + "attn.sigma.b"], p[pre + "attn.norm.gamma"], p[pre + "attn.norm.beta"]};
}

inline SsmWeights ssm_weights(const BoundParams& p, const std::string& pre) {
  return {p[pre + "ssm.in_proj.w"],   p[pre + "ssm.conv.w"],    p[pre + "ssm.conv.b"],
          p[pre + "ssm.x_proj.w"],    p[pre + "ssm.dt_proj.w"], p[pre + "ssm.dt_proj.b"],
          p[pre + "ssm.a_raw"],       p[pre + "ssm.d_skip"],    p[pre + "ssm.out_proj.w"]};
}

// One block: sparse attention layer (attention + FFN, each with residual and
// LayerNorm), then the state-space skip path and the adaptive gate.
inline BlockOutput maat_block(const Var& x, const Var& x_orig, const ModelConfig& cfg, const BoundParams& p,
                              std::size_t layer, const ForwardMode& mode = {}) {
  if (x.shape() != x_orig.shape()) {
    throw DimensionError("maat_block: x " + to_string(x.shape()) + " vs x_orig " + to_string(x_orig.shape()));
  }
  const std::string pre = detail::layer_prefix(layer);
  BlockOutput out;
  out.attention = anomaly_sparse_attention(x, cfg.attention(), attention_weights(p, pre), mode.training, mode.rng);
  const Var& h = out.attention.out;
  const Var ff = ops::linear(ops::gelu(ops::linear(h, p[pre + "ffn.in.w"], p[pre + "ffn.in.b"])),
                             p[pre + "ffn.out.w"], p[pre + "ffn.out.b"]);
  out.x_attn = ops::layer_norm(ops::add(h, ff), p[pre + "ffn.norm.gamma"], p[pre + "ffn.norm.beta"]);
  if (!cfg.ssm_path) {
    out.x_next = out.x_attn;
    return out;
  }
  const Var x_mamba = mamba_block(out.x_attn, cfg.ssm(), ssm_weights(p, pre));
  out.x_skip = ops::layer_norm(ops::add(x_mamba, x_orig), p[pre + "skip_norm.gamma"], p[pre + "skip_norm.beta"]);
  const GateOutput gated = gate(out.x_attn, out.x_skip, p[pre + "gate.w"], p[pre + "gate.b"]);
  out.x_next = gated.x_adapt;
  out.g = gated.g;
  return out;
}

struct ForwardVars {
  Var recon;  // [B, W, d]
  std::vector<Var> series;
  std::vector<Var> prior;
  std::vector<Var> sigma;
  std::vector<Var> gates;
};

struct ForwardOutput {
  Tensor recon;
  std::vector<AttentionMaps> maps;  // one per layer

  std::size_t layers() const { return maps.size(); }
};

inline ForwardVars forward(const Var& x, const ModelConfig& cfg, const BoundParams& p, const ForwardMode& mode = {}) {
  const Shape& xs = x.shape();
  if (xs.size() != 3 || xs[1] != cfg.window || xs[2] != cfg.input_dim) {
    throw DimensionError("forward: expected [B, " + std::to_string(cfg.window) + ", " + std::to_string(cfg.input_dim) +
                         "], got " + to_string(xs));
  }
  Tape& tape = x.tape();
  const std::size_t nb = xs[0];
  const Tensor pe = positional_encoding(cfg.window, cfg.d_model);
  Tensor pe_batch({nb, cfg.window, cfg.d_model});
  for (std::size_t b = 0; b < nb; ++b) std::copy(pe.data().begin(), pe.data().end(), &pe_batch[b * pe.size()]);

  Var h = ops::add(ops::linear(x, p["embed.w"], p["embed.b"]), tape.constant(std::move(pe_batch)));
  if (mode.training && cfg.dropout > 0.0) {
    if (!mode.rng) throw ContractError("forward: dropout needs an rng");
    h = ops::dropout(h, cfg.dropout, *mode.rng);
  }

  ForwardVars out;
  Var x_orig = h;
  for (std::size_t l = 0; l < cfg.e_layers; ++l) {
    BlockOutput blk = maat_block(h, x_orig, cfg, p, l, mode);
    h = blk.x_next;
    x_orig = h;
    out.series.push_back(blk.attention.series);
    out.prior.push_back(blk.attention.prior);
    out.sigma.push_back(blk.attention.sigma);
    if (blk.g.valid()) out.gates.push_back(blk.g);
  }
  if (cfg.final_norm) h = ops::layer_norm(h, p["final_norm.gamma"], p["final_norm.beta"]);
  out.recon = ops::linear(h, p["head.w"], p["head.b"]);
  return out;
}

// Inference convenience: runs on a private tape and returns plain tensors.
inline ForwardOutput forward(const Tensor& x, const ModelParams& params) {
  Tape tape;
  const BoundParams bound(tape, params.tensors, false);
  const ForwardVars fv = forward(tape.constant(x), params.config, bound);
  ForwardOutput out;
  out.recon = fv.recon.value();
  for (std::size_t l = 0; l < fv.series.size(); ++l) {
    out.maps.push_back({fv.prior[l].value(), fv.series[l].value(), fv.sigma[l].value()});
  }
  return out;
}

}  // namespace maat
