#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "maat/error.hpp"
#include "maat/tensor.hpp"

namespace maat {

using Labels = std::vector<std::uint8_t>;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  friend bool operator==(const NormStats&, const NormStats&) = default;
};

// Multivariate series, T rows by d channels, with optional 0/1 labels.
struct SeriesDataset {
  Tensor values;  // [T, d]
  std::optional<Labels> labels;
  std::optional<NormStats> norm_stats;  // set once normalized
  std::string name;

  std::size_t length() const { return values.rank() == 2 ? values.shape()[0] : 0; }
  std::size_t channels() const { return values.rank() == 2 ? values.shape()[1] : 0; }
};

// Contiguous, non-overlapping windows cut from a series.
struct WindowBatch {
  Tensor windows;                   // [B, W, d]
  std::vector<std::size_t> starts;  // offsets into the series, step W
  std::optional<Tensor> labels;     // [B, W]
  std::size_t window = 0;
  std::size_t valid_points = 0;  // < B*W only when a padded tail window is kept

  std::size_t count() const { return starts.size(); }
};

namespace csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_real(std::string_view cell) {
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || cell.empty()) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace csv

// Reads a comma-separated series. Every column other than `label_column` is a
// feature; a label column can only be located by name, so it needs a header.
inline SeriesDataset load_csv(const std::string& path, bool has_header,
                              const std::optional<std::string>& label_column = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  if (label_column && !has_header) throw ContractError("label column '" + *label_column + "' needs a header row");

  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> label_idx;
  std::size_t ncols = 0;
  if (has_header) {
    if (!std::getline(in, line)) throw EmptyDatasetError(path + ": empty file");
    ++line_no;
    const auto header = csv::split(line);
    ncols = header.size();
    if (label_column) {
      for (std::size_t c = 0; c < header.size(); ++c)
        if (header[c] == *label_column) label_idx = c;
      if (!label_idx) throw FormatError(path + ": no column named '" + *label_column + "'");
    }
  }

  std::vector<double> values;
  Labels labels;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto cells = csv::split(line);
    if (ncols == 0) ncols = cells.size();
    if (cells.size() != ncols) {
      throw FormatError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(ncols));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = csv::parse_real(cells[c]);
      if (!v || !std::isfinite(*v)) {
        throw ParseError(path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                         ": cannot parse '" + std::string(cells[c]) + "'");
      }
      if (label_idx && c == *label_idx) {
        if (*v != 0.0 && *v != 1.0) {
          throw ParseError(path + ": row " + std::to_string(line_no) + ", column " + std::to_string(c + 1) +
                           ": label must be 0 or 1");
        }
        labels.push_back(static_cast<std::uint8_t>(*v));
      } else {
        values.push_back(*v);
      }
    }
    ++rows;
  }
  if (rows == 0) throw EmptyDatasetError(path + ": no data rows");
  const std::size_t d = ncols - (label_idx ? 1 : 0);
  if (d == 0) throw FormatError(path + ": no feature columns");

  SeriesDataset ds;
  ds.values = Tensor(Shape{rows, d}, std::move(values));
  if (label_idx) ds.labels = std::move(labels);
  ds.name = path;
  return ds;
}

// Writes features as x0..x{d-1} plus a trailing "label" column when present.
// Values use the shortest round-trip form, so a reload is bit-exact.
inline void save_csv(const SeriesDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const std::size_t t_len = ds.length();
  const std::size_t d = ds.channels();
  for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << 'x' << c;
  if (ds.labels) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << csv::format_real(ds.values[t * d + c]);
    if (ds.labels) out << ',' << static_cast<int>((*ds.labels)[t]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline NormStats compute_stats(const SeriesDataset& ds) {
  const std::size_t t_len = ds.length();
  const std::size_t d = ds.channels();
  NormStats s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  if (t_len == 0) return s;
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += ds.values[t * d + c];
  for (double& m : s.mean) m /= static_cast<double>(t_len);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < d; ++c) {
      const double dv = ds.values[t * d + c] - s.mean[c];
      s.stddev[c] += dv * dv;
    }
  for (double& v : s.stddev) v = std::sqrt(v / static_cast<double>(t_len));
  return s;
}

// Per-channel z-score with the supplied statistics (training statistics for a
// test split) or, when absent, the dataset's own. Zero-variance channels are
// only centered. A dataset already normalized with the same statistics is
// returned unchanged.
inline SeriesDataset normalize(const SeriesDataset& ds, const std::optional<NormStats>& stats = std::nullopt) {
  if (stats && ds.norm_stats && *stats == *ds.norm_stats) return ds;
  const std::size_t d = ds.channels();
  const NormStats s = stats ? *stats : compute_stats(ds);
  if (s.mean.size() != d || s.stddev.size() != d) {
    throw DimensionError("normalize: statistics for " + std::to_string(s.mean.size()) + " channels, data has " +
                         std::to_string(d));
  }
  SeriesDataset out = ds;
  for (std::size_t t = 0; t < ds.length(); ++t) {
    for (std::size_t c = 0; c < d; ++c) {
      const double sd = s.stddev[c] > 0.0 ? s.stddev[c] : 1.0;
      out.values[t * d + c] = (ds.values[t * d + c] - s.mean[c]) / sd;
    }
  }
  out.norm_stats = s;
  return out;
}

// Non-overlapping windows with stride `window`. With drop_last == false a
// trailing partial window is kept and padded by repeating the last row;
// valid_points then tells how many leading points are real.
inline WindowBatch windows(const SeriesDataset& ds, std::size_t window, bool drop_last = true) {
  if (window == 0) throw ContractError("window size must be >= 1");
  const std::size_t t_len = ds.length();
  const std::size_t d = ds.channels();
  std::size_t count = t_len / window;
  if (!drop_last && t_len % window != 0) ++count;

  WindowBatch batch;
  batch.window = window;
  batch.windows = Tensor(Shape{count, window, d}, 0.0);
  if (ds.labels) batch.labels = Tensor(Shape{count, window}, 0.0);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t start = b * window;
    batch.starts.push_back(start);
    for (std::size_t w = 0; w < window; ++w) {
      const std::size_t t = std::min(start + w, t_len - 1);
      for (std::size_t c = 0; c < d; ++c) batch.windows[(b * window + w) * d + c] = ds.values[t * d + c];
      if (ds.labels) (*batch.labels)[b * window + w] = (*ds.labels)[t];
    }
  }
  batch.valid_points = std::min(count * window, t_len);
  return batch;
}

// Rows [begin, end) of a batch as a new [end-begin, W, d] tensor.
inline Tensor batch_slice(const WindowBatch& batch, std::size_t begin, std::size_t end) {
  const std::size_t per = batch.windows.size() / std::max<std::size_t>(batch.count(), 1);
  Shape shape = batch.windows.shape();
  shape[0] = end - begin;
  std::vector<double> data(batch.windows.values().begin() + static_cast<std::ptrdiff_t>(begin * per),
                           batch.windows.values().begin() + static_cast<std::ptrdiff_t>(end * per));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace maat
