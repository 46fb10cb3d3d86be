#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/random.hpp"

namespace maat {

enum class InjectionKind { Spike, LevelShift, NoiseBurst };

inline std::string to_string(InjectionKind k) {
  switch (k) {
    case InjectionKind::Spike: return "spike";
    case InjectionKind::LevelShift: return "level-shift";
    case InjectionKind::NoiseBurst: return "noise-burst";
  }
  return "?";
}

inline std::optional<InjectionKind> parse_injection_kind(std::string_view s) {
  if (s == "spike") return InjectionKind::Spike;
  if (s == "level-shift" || s == "level_shift") return InjectionKind::LevelShift;
  if (s == "noise-burst" || s == "noise_burst") return InjectionKind::NoiseBurst;
  return std::nullopt;
}

// One labeled anomaly. Magnitude is in units of the channel's standard
// deviation before injection.
struct Injection {
  std::size_t start = 0;
  std::size_t duration = 1;
  InjectionKind kind = InjectionKind::Spike;
  double magnitude = 8.0;
};

inline std::string describe(const Injection& inj) {
  return to_string(inj.kind) + "@" + std::to_string(inj.start) + "+" + std::to_string(inj.duration);
}

// Sine-mixture base signal plus Gaussian noise, with injected anomalies.
// `origin` shifts the time axis so a train split and a test split drawn from
// the same spec continue one underlying signal.
struct SynthSpec {
  std::size_t length = 2000;
  std::size_t channels = 1;
  std::size_t components = 3;  // sinusoids per channel
  double min_period = 20.0;
  double max_period = 200.0;
  double noise = 0.1;
  std::vector<Injection> injections;
  std::uint64_t seed = 0;
  std::size_t origin = 0;
};

inline void validate(const SynthSpec& spec) {
  if (spec.length == 0 || spec.channels == 0 || spec.components == 0) {
    throw SpecError("synthetic spec: length, channels and components must be >= 1");
  }
  if (!(spec.min_period > 0.0 && spec.max_period >= spec.min_period)) {
    throw SpecError("synthetic spec: need 0 < min_period <= max_period");
  }
  if (!(spec.noise >= 0.0)) throw SpecError("synthetic spec: noise must be >= 0");
  std::vector<std::size_t> order(spec.injections.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < spec.injections.size(); ++i) {
    const Injection& inj = spec.injections[i];
    if (inj.duration == 0 || inj.start >= spec.length || inj.duration > spec.length - inj.start) {
      throw SpecError("injection #" + std::to_string(i + 1) + " (" + describe(inj) + ") lies outside [0, " +
                      std::to_string(spec.length) + ")");
    }
    if (!(inj.magnitude >= 0.0) || !std::isfinite(inj.magnitude)) {
      throw SpecError("injection #" + std::to_string(i + 1) + " (" + describe(inj) + ") has an invalid magnitude");
    }
  }
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return spec.injections[a].start < spec.injections[b].start; });
  for (std::size_t k = 1; k < order.size(); ++k) {
    const Injection& prev = spec.injections[order[k - 1]];
    const Injection& cur = spec.injections[order[k]];
    if (cur.start < prev.start + prev.duration) {
      throw SpecError("injection #" + std::to_string(order[k] + 1) + " (" + describe(cur) + ") overlaps injection #" +
                      std::to_string(order[k - 1] + 1) + " (" + describe(prev) + ")");
    }
  }
}

inline SeriesDataset synth_generate(const SynthSpec& spec) {
  validate(spec);
  const std::size_t t_len = spec.length;
  const std::size_t d = spec.channels;

  // Base-signal parameters depend on the seed only; noise also on the origin.
  Rng shape_rng(spec.seed);
  struct Component {
    double amplitude, period, phase;
  };
  std::vector<std::vector<Component>> comps(d);
  for (auto& channel : comps) {
    for (std::size_t m = 0; m < spec.components; ++m) {
      const double amp = shape_rng.uniform(0.5, 1.5);
      const double period = shape_rng.uniform(spec.min_period, spec.max_period);
      const double phase = shape_rng.uniform(0.0, 2.0 * std::numbers::pi);
      channel.push_back({amp, period, phase});
    }
  }
  Rng noise_rng(spec.seed * 0x9E3779B97F4A7C15ULL + spec.origin + 1);

  Tensor values(Shape{t_len, d}, 0.0);
  for (std::size_t t = 0; t < t_len; ++t) {
    const double time = static_cast<double>(spec.origin + t);
    for (std::size_t c = 0; c < d; ++c) {
      double v = 0.0;
      for (const Component& k : comps[c]) v += k.amplitude * std::sin(2.0 * std::numbers::pi * time / k.period + k.phase);
      values[t * d + c] = v + spec.noise * noise_rng.normal();
    }
  }

  SeriesDataset clean;
  clean.values = values;
  const NormStats stats = compute_stats(clean);

  Labels labels(t_len, 0);
  for (const Injection& inj : spec.injections) {
    for (std::size_t k = 0; k < inj.duration; ++k) {
      const std::size_t t = inj.start + k;
      labels[t] = 1;
      for (std::size_t c = 0; c < d; ++c) {
        const double amp = inj.magnitude * stats.stddev[c];
        double& v = values[t * d + c];
        switch (inj.kind) {
          case InjectionKind::Spike: v += (k % 2 == 0 ? amp : -amp); break;
          case InjectionKind::LevelShift: v += amp; break;
          case InjectionKind::NoiseBurst: v += amp * noise_rng.normal(); break;
        }
      }
    }
  }

  SeriesDataset ds;
  ds.values = std::move(values);
  ds.labels = std::move(labels);
  ds.name = "synthetic(seed=" + std::to_string(spec.seed) + ")";
  return ds;
}

}  // namespace maat
