#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "maat/data.hpp"
#include "maat/error.hpp"
#include "maat/model.hpp"

// Binary checkpoint, all integers and reals little-endian:
//
//   "MAATCKPT"            8-byte magic
//   u32 version           currently 1
//   u64 n, n bytes        model config as "key=value\n" lines
//   u64 count             number of tensors
//   per tensor:
//     u32 n, n bytes      name
//     u32 rank, rank*u64  extents
//     f64 * numel         raw values, row-major
namespace maat {

inline constexpr std::array<char, 8> kCheckpointMagic = {'M', 'A', 'A', 'T', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::map<std::string, std::string> to_record(const ModelConfig& c) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {{"window", std::to_string(c.window)},
          {"input_dim", std::to_string(c.input_dim)},
          {"d_model", std::to_string(c.d_model)},
          {"n_heads", std::to_string(c.n_heads)},
          {"e_layers", std::to_string(c.e_layers)},
          {"block_size", std::to_string(c.block_size)},
          {"d_state", std::to_string(c.d_state)},
          {"d_conv", std::to_string(c.d_conv)},
          {"expand", std::to_string(c.expand)},
          {"ffn_mult", std::to_string(c.ffn_mult)},
          {"dropout", csv::format_real(c.dropout)},
          {"seed", std::to_string(c.seed)},
          {"scale_by_d_model", b(c.scale_by_d_model)},
          {"final_norm", b(c.final_norm)},
          {"ssm_path", b(c.ssm_path)}};
}

inline ModelConfig model_config_from_record(const std::map<std::string, std::string>& rec) {
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = rec.find(k);
    if (it == rec.end()) throw FormatError("checkpoint config lacks '" + k + "'");
    return it->second;
  };
  auto uint = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };
  auto flag = [&](const std::string& k) { return get(k) == "true"; };
  ModelConfig c;
  c.window = uint("window");
  c.input_dim = uint("input_dim");
  c.d_model = uint("d_model");
  c.n_heads = uint("n_heads");
  c.e_layers = uint("e_layers");
  c.block_size = uint("block_size");
  c.d_state = uint("d_state");
  c.d_conv = uint("d_conv");
  c.expand = uint("expand");
  c.ffn_mult = uint("ffn_mult");
  c.dropout = std::stod(get("dropout"));
  c.seed = std::stoull(get("seed"));
  c.scale_by_d_model = flag("scale_by_d_model");
  c.final_norm = flag("final_norm");
  c.ssm_path = flag("ssm_path");
  return c;
}

namespace detail {

template <class T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <class T>
T read_le(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw FormatError("checkpoint truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

inline std::string read_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw FormatError("checkpoint field too large");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated");
  return s;
}

inline std::string join_reals(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + csv::format_real(v[i]);
  return out;
}

inline std::vector<double> split_reals(const std::string& s) {
  std::vector<double> out;
  for (const auto& f : csv::split(s)) {
    const auto v = csv::parse_real(f);
    if (!v) throw FormatError("checkpoint: malformed real '" + std::string(f) + "'");
    out.push_back(*v);
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  std::string cfg;
  auto rec = to_record(params.config);
  if (params.norm) {
    rec["norm.mean"] = detail::join_reals(params.norm->mean);
    rec["norm.stddev"] = detail::join_reals(params.norm->stddev);
  }
  for (const auto& [k, v] : rec) cfg += k + "=" + v + "\n";
  detail::write_le<std::uint64_t>(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::write_le<std::uint64_t>(out, params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const std::string& name = params.tensors.name(i);
    const Tensor& t = params.tensors.at(i);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) detail::write_le<std::uint64_t>(out, e);
    for (double v : t.data()) detail::write_le<double>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw FormatError(path + ": not a checkpoint file");
  }
  const auto version = detail::read_le<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::string cfg_text = detail::read_bytes(in, detail::read_le<std::uint64_t>(in));
  std::map<std::string, std::string> rec;
  std::istringstream lines(cfg_text);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(path + ": malformed config line '" + line + "'");
    rec[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelParams params{model_config_from_record(rec), {}, std::nullopt};
  params.config.validate();
  if (rec.contains("norm.mean") && rec.contains("norm.stddev")) {
    params.norm = NormStats{detail::split_reals(rec["norm.mean"]), detail::split_reals(rec["norm.stddev"])};
    if (params.norm->mean.size() != params.config.input_dim || params.norm->stddev.size() != params.config.input_dim) {
      throw FormatError(path + ": normalization statistics do not match input_dim");
    }
  }
  const auto count = detail::read_le<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = detail::read_bytes(in, detail::read_le<std::uint32_t>(in));
    const auto rank = detail::read_le<std::uint32_t>(in);
    if (rank > 8) throw FormatError(path + ": tensor '" + name + "' has implausible rank");
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(detail::read_le<std::uint64_t>(in));
    std::vector<double> data(numel(shape));
    for (double& v : data) v = detail::read_le<double>(in);
    params.tensors.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  // Structure must match what the recorded config would build.
  const ModelParams expected = init_params(params.config);
  if (expected.tensors.size() != params.tensors.size()) throw FormatError(path + ": tensor set does not match config");
  for (std::size_t i = 0; i < expected.tensors.size(); ++i) {
    if (expected.tensors.name(i) != params.tensors.name(i) ||
        expected.tensors.at(i).shape() != params.tensors.at(i).shape()) {
      throw FormatError(path + ": tensor '" + params.tensors.name(i) + "' does not match config");
    }
  }
  return params;
}

}  // namespace maat
