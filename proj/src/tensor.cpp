#include "stakit/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "stakit/error.hpp"

namespace stakit {

namespace {

void require_finite(std::span<const double> data, const char* what) {
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::invalid_argument,
                  std::string(what) + " contains a non-finite entry");
    }
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::dimension_mismatch, std::string(op) + ": shapes " +
                                                   a.shape_string() + " and " +
                                                   b.shape_string() + " differ");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) {
    throw Error(ErrorCode::invalid_argument, "matrix fill value is not finite");
  }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorCode::dimension_mismatch,
                "matrix data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_string());
  }
  require_finite(data_, "matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) {
      throw Error(ErrorCode::dimension_mismatch, "ragged matrix rows");
    }
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Grid::Grid(std::size_t height, std::size_t width, std::size_t channels, double fill)
    : height_(height), width_(width), channels_(channels),
      data_(height * width * channels, fill) {}

Grid::Grid(std::size_t height, std::size_t width, std::size_t channels,
           std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (data_.size() != height_ * width_ * channels_) {
    throw Error(ErrorCode::dimension_mismatch,
                "grid data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_string());
  }
  require_finite(data_, "grid");
}

std::string Grid::shape_string() const {
  return std::to_string(height_) + "x" + std::to_string(width_) + "x" +
         std::to_string(channels_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "matmul: cannot multiply " +
                                                   a.shape_string() + " by " +
                                                   b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "matmul_tn: cannot multiply " +
                                                   a.shape_string() + "^T by " +
                                                   b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) acc += a(k, i) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "matmul_nt: cannot multiply " +
                                                   a.shape_string() + " by " +
                                                   b.shape_string() + "^T");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_in_place(out, b);
  return out;
}

void add_in_place(Matrix& acc, const Matrix& b) {
  require_same_shape(acc, b, "add");
  auto dst = acc.data();
  auto src = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.data()) v *= factor;
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "vstack: column counts of " +
                                                   a.shape_string() + " and " +
                                                   b.shape_string() + " differ");
  }
  std::vector<double> data(a.values());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count) {
  if (first + count > m.rows()) {
    throw Error(ErrorCode::dimension_mismatch,
                "slice_rows: rows [" + std::to_string(first) + ", " +
                    std::to_string(first + count) + ") out of " + m.shape_string());
  }
  auto begin = m.values().begin() + static_cast<std::ptrdiff_t>(first * m.cols());
  return Matrix(count, m.cols(),
                std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * m.cols())));
}

Matrix slice_cols(const Matrix& m, std::size_t first, std::size_t count) {
  if (first + count > m.cols()) {
    throw Error(ErrorCode::dimension_mismatch,
                "slice_cols: cols out of range for " + m.shape_string());
  }
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, first + j);
  return out;
}

void write_cols(Matrix& dst, std::size_t first, const Matrix& src) {
  if (src.rows() != dst.rows() || first + src.cols() > dst.cols()) {
    throw Error(ErrorCode::dimension_mismatch, "write_cols: cannot place " +
                                                   src.shape_string() + " into " +
                                                   dst.shape_string());
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, first + j) = src(i, j);
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto dst = out.row(i);
    if (in.empty()) continue;
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - peak);
      total += dst[j];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Matrix layer_norm(const Matrix& m, std::span<const double> gamma,
                  std::span<const double> beta, double eps) {
  if (gamma.size() != m.cols() || beta.size() != m.cols()) {
    throw Error(ErrorCode::dimension_mismatch,
                "layer_norm: gamma/beta lengths " + std::to_string(gamma.size()) + "/" +
                    std::to_string(beta.size()) + " do not match " +
                    std::to_string(m.cols()) + " columns");
  }
  if (!(eps > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "layer_norm: eps must be positive");
  }
  Matrix out(m.rows(), m.cols());
  const double n = static_cast<double>(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto x = m.row(i);
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < x.size(); ++j)
      out(i, j) = gamma[j] * ((x[j] - mean) * inv_std) + beta[j];
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  const double last = static_cast<double>(in - 1);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, last);
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Grid bilinear_resize(const Grid& g, std::size_t out_h, std::size_t out_w) {
  if (out_h == 0 || out_w == 0) {
    throw Error(ErrorCode::invalid_argument, "bilinear_resize: target size " +
                                                 std::to_string(out_h) + "x" +
                                                 std::to_string(out_w) + " is empty");
  }
  if (g.height() == 0 || g.width() == 0) {
    throw Error(ErrorCode::invalid_argument, "bilinear_resize: source grid is empty");
  }
  if (out_h == g.height() && out_w == g.width()) return g;

  const auto ys = bilinear_taps(g.height(), out_h);
  const auto xs = bilinear_taps(g.width(), out_w);
  Grid out(out_h, out_w, g.channels());
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = ys[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = xs[x];
      for (std::size_t c = 0; c < g.channels(); ++c) {
        const double top = g.at(ty.lo, tx.lo, c) * (1.0 - tx.frac) + g.at(ty.lo, tx.hi, c) * tx.frac;
        const double bottom = g.at(ty.hi, tx.lo, c) * (1.0 - tx.frac) + g.at(ty.hi, tx.hi, c) * tx.frac;
        out.at(y, x, c) = top * (1.0 - ty.frac) + bottom * ty.frac;
      }
    }
  }
  return out;
}

Grid conv3x3(const Grid& g, std::span<const double> kernel, std::size_t out_channels) {
  const std::size_t cin = g.channels();
  if (kernel.size() != 9 * cin * out_channels) {
    throw Error(ErrorCode::dimension_mismatch,
                "conv3x3: kernel has " + std::to_string(kernel.size()) + " taps, expected " +
                    std::to_string(9 * cin * out_channels));
  }
  Grid out(g.height(), g.width(), out_channels);
  const auto h = static_cast<std::ptrdiff_t>(g.height());
  const auto w = static_cast<std::ptrdiff_t>(g.width());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (std::size_t co = 0; co < out_channels; ++co) {
        double acc = 0.0;
        for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
          const std::ptrdiff_t sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
            const std::ptrdiff_t sx = x + kx - 1;
            if (sx < 0 || sx >= w) continue;
            const std::size_t base = static_cast<std::size_t>(ky * 3 + kx) * cin * out_channels;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              acc += g.at(static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), ci) *
                     kernel[base + ci * out_channels + co];
            }
          }
        }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), co) = acc;
      }
    }
  }
  return out;
}

std::vector<double> identity_kernel3x3(std::size_t channels) {
  std::vector<double> k(9 * channels * channels, 0.0);
  const std::size_t center = 4 * channels * channels;
  for (std::size_t c = 0; c < channels; ++c) k[center + c * channels + c] = 1.0;
  return k;
}

}  // namespace stakit
