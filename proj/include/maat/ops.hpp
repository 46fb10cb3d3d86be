#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "maat/error.hpp"
#include "maat/random.hpp"
#include "maat/tape.hpp"
#include "maat/tensor.hpp"

// Differentiable tensor operations. Every function records one node on the
// tape of its operands and returns a handle to the result.
namespace maat::ops {

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
  }
}

inline std::size_t last_extent(const Tensor& t, const char* op) {
  if (t.rank() == 0) throw DimensionError(std::string(op) + ": scalar input");
  return t.shape().back();
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

inline void axpy(std::span<double> y, std::span<const double> x, double a = 1.0) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

// Elementwise unary op. `deriv(x, y)` returns dy/dx.
template <class F, class D>
Var unary(const Var& x, F f, D deriv) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  return x.tape().record(std::move(y), {x},
                         [deriv](const Tape& t, const Tape::Node& n, const Tensor& g,
                                 std::span<Tensor* const> gin) {
                           const Tensor& xin = t.value(n.inputs[0]);
                           Tensor& gx = *gin[0];
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             gx[i] += g[i] * deriv(xin[i], n.value[i]);
                           }
                         });
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  detail::axpy(y.data(), b.value().data());
  return a.tape().record(std::move(y), {a, b},
                         [](const Tape&, const Tape::Node&, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           for (Tensor* gi : gin)
                             if (gi) detail::axpy(gi->data(), g.data());
                         });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  detail::axpy(y.data(), b.value().data(), -1.0);
  return a.tape().record(std::move(y), {a, b},
                         [](const Tape&, const Tape::Node&, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           if (gin[0]) detail::axpy(gin[0]->data(), g.data());
                           if (gin[1]) detail::axpy(gin[1]->data(), g.data(), -1.0);
                         });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return a.tape().record(std::move(y), {a, b},
                         [](const Tape& t, const Tape::Node& n, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           const Tensor& x0 = t.value(n.inputs[0]);
                           const Tensor& x1 = t.value(n.inputs[1]);
                           if (gin[0])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * x1[i];
                           if (gin[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * x0[i];
                         });
}

inline Var scale(const Var& x, double s) {
  Tensor y = x.value();
  for (double& v : y.data()) v *= s;
  return x.tape().record(std::move(y), {x},
                         [s](const Tape&, const Tape::Node&, const Tensor& g,
                             std::span<Tensor* const> gin) {
                           detail::axpy(gin[0]->data(), g.data(), s);
                         });
}

inline Var add_scalar(const Var& x, double s) {
  Tensor y = x.value();
  for (double& v : y.data()) v += s;
  return x.tape().record(std::move(y), {x},
                         [](const Tape&, const Tape::Node&, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           detail::axpy(gin[0]->data(), g.data());
                         });
}

// x + bias broadcast along the last axis.
inline Var add_bias(const Var& x, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t c = detail::last_extent(xv, "add_bias");
  if (bv.rank() != 1 || bv.size() != c) {
    throw DimensionError("add_bias: bias " + to_string(bv.shape()) + " vs input " +
                         to_string(xv.shape()));
  }
  Tensor y = xv;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i % c];
  return x.tape().record(std::move(y), {x, bias},
                         [c](const Tape&, const Tape::Node&, const Tensor& g,
                             std::span<Tensor* const> gin) {
                           if (gin[0]) detail::axpy(gin[0]->data(), g.data());
                           if (gin[1])
                             for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i % c] += g[i];
                         });
}

inline Var square(const Var& x) {
  return detail::unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

inline Var exp(const Var& x) {
  return detail::unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var tanh(const Var& x) {
  return detail::unary(x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary(x, detail::sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Var softplus(const Var& x) {
  return detail::unary(x, detail::softplus, [](double v, double) { return detail::sigmoid(v); });
}

inline Var silu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v * detail::sigmoid(v); },
      [](double v, double) {
        const double s = detail::sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

// Exact (erf) GELU.
inline Var gelu(const Var& x) {
  return detail::unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + v * pdf;
      });
}

// ------------------------------------------------------------------- products

// a[..., m, k] · b[k, n] -> [..., m, n]; b is shared across leading axes.
inline Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || bv.rank() != 2 || av.shape().back() != bv.shape()[0]) {
    throw DimensionError("matmul: " + to_string(av.shape()) + " . " + to_string(bv.shape()));
  }
  const std::size_t k = bv.shape()[0];
  const std::size_t n = bv.shape()[1];
  const std::size_t rows = av.size() / k;
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor y(out_shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* yr = &y[r * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double arp = av[r * k + p];
      if (arp == 0.0) continue;
      const double* bp = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) yr[j] += arp * bp[j];
    }
  }
  return a.tape().record(
      std::move(y), {a, b},
      [rows, k, n](const Tape& t, const Tape::Node& node, const Tensor& g,
                   std::span<Tensor* const> gin) {
        const Tensor& a_ = t.value(node.inputs[0]);
        const Tensor& b_ = t.value(node.inputs[1]);
        if (gin[0]) {
          Tensor& ga = *gin[0];
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = &g[r * n];
            for (std::size_t p = 0; p < k; ++p) {
              const double* bp = &b_[p * n];
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) acc += gr[j] * bp[j];
              ga[r * k + p] += acc;
            }
          }
        }
        if (gin[1]) {
          Tensor& gb = *gin[1];
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gr = &g[r * n];
            for (std::size_t p = 0; p < k; ++p) {
              const double arp = a_[r * k + p];
              if (arp == 0.0) continue;
              double* gbp = &gb[p * n];
              for (std::size_t j = 0; j < n; ++j) gbp[j] += arp * gr[j];
            }
          }
        }
      });
}

// Batched product over matching leading axes:
// a[..., m, k] · b[..., k, n]   (or b[..., n, k] with transpose_b).
inline Var bmm(const Var& a, const Var& b, bool transpose_b = false) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() < 2 || av.rank() != bv.rank() ||
      !std::equal(av.shape().begin(), av.shape().end() - 2, bv.shape().begin())) {
    throw DimensionError("bmm: " + to_string(av.shape()) + " . " + to_string(bv.shape()));
  }
  const std::size_t m = av.shape()[av.rank() - 2];
  const std::size_t k = av.shape().back();
  const std::size_t bk = transpose_b ? bv.shape().back() : bv.shape()[bv.rank() - 2];
  const std::size_t n = transpose_b ? bv.shape()[bv.rank() - 2] : bv.shape().back();
  if (bk != k) throw DimensionError("bmm: inner extents " + std::to_string(k) + " vs " + std::to_string(bk));
  const std::size_t batches = av.size() / (m * k);
  Shape out_shape = av.shape();
  out_shape.back() = n;
  Tensor y(out_shape, 0.0);
  // b element (p, j) of batch z
  auto b_at = [transpose_b, k, n](const Tensor& bt, std::size_t z, std::size_t p, std::size_t j) {
    return transpose_b ? bt[z * n * k + j * k + p] : bt[z * k * n + p * n + j];
  };
  for (std::size_t z = 0; z < batches; ++z) {
    for (std::size_t i = 0; i < m; ++i) {
      double* yr = &y[(z * m + i) * n];
      const double* ar = &av[(z * m + i) * k];
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) {
          const double* br = &bv[z * n * k + j * k];
          double acc = 0.0;
          for (std::size_t p = 0; p < k; ++p) acc += ar[p] * br[p];
          yr[j] = acc;
        }
      } else {
        for (std::size_t p = 0; p < k; ++p) {
          const double* bp = &bv[z * k * n + p * n];
          for (std::size_t j = 0; j < n; ++j) yr[j] += ar[p] * bp[j];
        }
      }
    }
  }
  return a.tape().record(
      std::move(y), {a, b},
      [=](const Tape& t, const Tape::Node& node, const Tensor& g, std::span<Tensor* const> gin) {
        const Tensor& a_ = t.value(node.inputs[0]);
        const Tensor& b_ = t.value(node.inputs[1]);
        for (std::size_t z = 0; z < batches; ++z) {
          for (std::size_t i = 0; i < m; ++i) {
            const double* gr = &g[(z * m + i) * n];
            const double* ar = &a_[(z * m + i) * k];
            for (std::size_t p = 0; p < k; ++p) {
              if (gin[0]) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += gr[j] * b_at(b_, z, p, j);
                (*gin[0])[(z * m + i) * k + p] += acc;
              }
              if (gin[1]) {
                Tensor& gb = *gin[1];
                for (std::size_t j = 0; j < n; ++j) {
                  const std::size_t off = transpose_b ? z * n * k + j * k + p : z * k * n + p * n + j;
                  gb[off] += ar[p] * gr[j];
                }
              }
            }
          }
        }
      });
}

// x[..., in] · w[in, out] + b[out]
inline Var linear(const Var& x, const Var& w, const Var& b) { return add_bias(matmul(x, w), b); }

// ------------------------------------------------------------------ softmax

// Row softmax over the last axis. `keep` (same extents as the last two axes of
// x, broadcast over leading axes) marks attendable entries with nonzero
// values; masked entries come out exactly 0.
inline Tensor softmax_rows_value(const Tensor& x, const Tensor* keep = nullptr) {
  const std::size_t n = detail::last_extent(x, "softmax_rows");
  std::size_t mask_rows = 0;
  if (keep) {
    if (keep->rank() != 2 || x.rank() < 2 || keep->shape()[1] != n ||
        keep->shape()[0] != x.shape()[x.rank() - 2]) {
      throw DimensionError("softmax_rows: mask " + to_string(keep->shape()) + " vs input " +
                           to_string(x.shape()));
    }
    mask_rows = keep->shape()[0];
  }
  const std::size_t rows = n ? x.size() / n : 0;
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Tensor y(x.shape(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * n];
    double* yr = &y[r * n];
    const double* kr = keep ? &(*keep)[(r % mask_rows) * n] : nullptr;
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = (kr && kr[j] == 0.0) ? kNegInf : xr[j];
      mx = std::max(mx, v);
    }
    if (mx == kNegInf) {
      throw DegenerateRowError("softmax_rows: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = (kr && kr[j] == 0.0) ? kNegInf : xr[j];
      yr[j] = std::exp(v - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] = (kr && kr[j] == 0.0) ? 0.0 : yr[j] / z;
  }
  return y;
}

inline Var softmax_rows(const Var& x, const Tensor* keep = nullptr) {
  Tensor y = softmax_rows_value(x.value(), keep);
  const std::size_t n = y.shape().back();
  return x.tape().record(std::move(y), {x},
                         [n](const Tape&, const Tape::Node& node, const Tensor& g,
                             std::span<Tensor* const> gin) {
                           const Tensor& y_ = node.value;
                           Tensor& gx = *gin[0];
                           for (std::size_t r = 0; r < y_.size() / n; ++r) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y_[r * n + j];
                             for (std::size_t j = 0; j < n; ++j)
                               gx[r * n + j] += y_[r * n + j] * (g[r * n + j] - dot);
                           }
                         });
}

// --------------------------------------------------------------- layer norm

inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = kLayerNormEps) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || xv.shape().back() == 0) throw DimensionError("layer_norm: empty feature axis");
  const std::size_t d = xv.shape().back();
  if (gamma.value().size() != d || beta.value().size() != d || gamma.value().rank() != 1 ||
      beta.value().rank() != 1) {
    throw DimensionError("layer_norm: affine parameters must have extent " + std::to_string(d));
  }
  const std::size_t rows = xv.size() / d;
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor y(xv.shape());
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * d];
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mean) * is;
      (*xhat)[r * d + j] = h;
      y[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.tape().record(
      std::move(y), {x, gamma, beta},
      [d, rows, xhat, inv_std](const Tape& t, const Tape::Node& node, const Tensor& g,
                               std::span<Tensor* const> gin) {
        const Tensor& gam = t.value(node.inputs[1]);
        std::vector<double> gh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* hr = &(*xhat)[r * d];
          const double* gr = &g[r * d];
          if (gin[1])
            for (std::size_t j = 0; j < d; ++j) (*gin[1])[j] += gr[j] * hr[j];
          if (gin[2])
            for (std::size_t j = 0; j < d; ++j) (*gin[2])[j] += gr[j];
          if (gin[0]) {
            double m1 = 0.0;
            double m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              gh[j] = gr[j] * gam[j];
              m1 += gh[j];
              m2 += gh[j] * hr[j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            const double is = (*inv_std)[r];
            for (std::size_t j = 0; j < d; ++j) (*gin[0])[r * d + j] += is * (gh[j] - m1 - hr[j] * m2);
          }
        }
      });
}

// ------------------------------------------------------------- data movement

inline Var reshape(const Var& x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(y), {x},
                         [](const Tape&, const Tape::Node&, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           detail::axpy(gin[0]->data(), g.data());
                         });
}

// y.shape[i] = x.shape[perm[i]]
inline Var permute(const Var& x, const std::vector<std::size_t>& perm) {
  const Tensor& xv = x.value();
  const std::size_t r = xv.rank();
  if (perm.size() != r) throw DimensionError("permute: rank mismatch");
  std::vector<bool> seen(r, false);
  for (std::size_t p : perm) {
    if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
    seen[p] = true;
  }
  std::vector<std::size_t> xstride(r, 1);
  for (std::size_t i = r; i-- > 1;) xstride[i - 1] = xstride[i] * xv.shape()[i];
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = xv.shape()[perm[i]];

  auto src = std::make_shared<std::vector<std::size_t>>(xv.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < xv.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * xstride[perm[i]];
    (*src)[o] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor y(out_shape);
  for (std::size_t o = 0; o < y.size(); ++o) y[o] = xv[(*src)[o]];
  return x.tape().record(std::move(y), {x},
                         [src](const Tape&, const Tape::Node&, const Tensor& g,
                               std::span<Tensor* const> gin) {
                           Tensor& gx = *gin[0];
                           for (std::size_t o = 0; o < g.size(); ++o) gx[(*src)[o]] += g[o];
                         });
}

// Concatenation along the last axis.
inline Var concat_last(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() == 0 || av.rank() != bv.rank() ||
      !std::equal(av.shape().begin(), av.shape().end() - 1, bv.shape().begin())) {
    throw DimensionError("concat_last: " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  }
  const std::size_t ca = av.shape().back();
  const std::size_t cb = bv.shape().back();
  const std::size_t rows = av.size() / std::max<std::size_t>(ca, 1);
  Shape out_shape = av.shape();
  out_shape.back() = ca + cb;
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&av[r * ca], ca, &y[r * (ca + cb)]);
    std::copy_n(&bv[r * cb], cb, &y[r * (ca + cb) + ca]);
  }
  return a.tape().record(std::move(y), {a, b},
                         [rows, ca, cb](const Tape&, const Tape::Node&, const Tensor& g,
                                        std::span<Tensor* const> gin) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             if (gin[0])
                               for (std::size_t j = 0; j < ca; ++j)
                                 (*gin[0])[r * ca + j] += g[r * (ca + cb) + j];
                             if (gin[1])
                               for (std::size_t j = 0; j < cb; ++j)
                                 (*gin[1])[r * cb + j] += g[r * (ca + cb) + ca + j];
                           }
                         });
}

// Columns [begin, end) of the last axis.
inline Var slice_last(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  const std::size_t c = detail::last_extent(xv, "slice_last");
  if (begin > end || end > c) throw DimensionError("slice_last: bad range");
  const std::size_t w = end - begin;
  const std::size_t rows = c ? xv.size() / c : 0;
  Shape out_shape = xv.shape();
  out_shape.back() = w;
  Tensor y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&xv[r * c + begin], w, &y[r * w]);
  return x.tape().record(std::move(y), {x},
                         [rows, c, w, begin](const Tape&, const Tape::Node&, const Tensor& g,
                                             std::span<Tensor* const> gin) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t j = 0; j < w; ++j) (*gin[0])[r * c + begin + j] += g[r * w + j];
                         });
}

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& x) {
  const Tensor& xv = x.value();
  double s = 0.0;
  for (double v : xv.data()) s += v;
  return x.tape().record(Tensor::scalar(s), {x},
                         [](const Tape&, const Tape::Node&, const Tensor& g,
                            std::span<Tensor* const> gin) {
                           for (double& v : gin[0]->data()) v += g[0];
                         });
}

inline Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

// Mean squared difference over all entries.
inline Var mse(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t n = av.size();
  if (n == 0) throw DimensionError("mse of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return a.tape().record(Tensor::scalar(s / static_cast<double>(n)), {a, b},
                         [n](const Tape& t, const Tape::Node& node, const Tensor& g,
                             std::span<Tensor* const> gin) {
                           const Tensor& a_ = t.value(node.inputs[0]);
                           const Tensor& b_ = t.value(node.inputs[1]);
                           const double c = 2.0 * g[0] / static_cast<double>(n);
                           for (std::size_t i = 0; i < n; ++i) {
                             const double d = c * (a_[i] - b_[i]);
                             if (gin[0]) (*gin[0])[i] += d;
                             if (gin[1]) (*gin[1])[i] -= d;
                           }
                         });
}

// ------------------------------------------------------------------- dropout

// Inverted dropout; identity when rate == 0.
inline Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ParameterError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& xv = x.value();
  auto mask = std::make_shared<std::vector<double>>(xv.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    y[i] = xv[i] * (*mask)[i];
  }
  return x.tape().record(std::move(y), {x},
                         [mask](const Tape&, const Tape::Node&, const Tensor& g,
                                std::span<Tensor* const> gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*mask)[i];
                         });
}

}  // namespace maat::ops
