#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fixtures.hpp"
#include "maat/maat.hpp"

namespace maat::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  return rand_uniform(rng, std::move(shape), lo, hi);
}

// Rows of a [r, n] tensor that each sum to one.
inline Tensor random_stochastic(Rng& rng, std::size_t rows, std::size_t n) {
  Tensor t({rows, n});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += t[r * n + j] = rng.uniform(0.01, 1.0);
    for (std::size_t j = 0; j < n; ++j) t[r * n + j] /= s;
  }
  return t;
}

inline ModelConfig toy_model(std::size_t window = 16, std::size_t d = 4, std::size_t d_model = 16,
                             std::size_t layers = 2) {
  ModelConfig c;
  c.window = window;
  c.input_dim = d;
  c.d_model = d_model;
  c.n_heads = 2;
  c.e_layers = layers;
  c.block_size = 6;
  c.d_state = 4;
  c.d_conv = 3;
  c.expand = 2;
  c.ffn_mult = 2;
  c.seed = 11;
  return c;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("maat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::uint8_t> bits(std::initializer_list<int> v) { return {v.begin(), v.end()}; }

}  // namespace maat::testing
