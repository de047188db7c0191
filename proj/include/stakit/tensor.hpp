#pragma once

// Dense row-major kernels in double precision. Every reduction runs in a
// fixed left-to-right order so results are reproducible bit for bit.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace stakit {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws if data.size() != rows * cols or any entry is NaN/Inf.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Feature map laid out as [y][x][channel].
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, std::size_t channels, double fill = 0.0);
  Grid(std::size_t height, std::size_t width, std::size_t channels,
       std::vector<double> data);

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b and a * b^T without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
void add_in_place(Matrix& acc, const Matrix& b);
Matrix scale(const Matrix& m, double factor);

// Stacks b under a; both must share the column count.
Matrix vstack(const Matrix& a, const Matrix& b);
Matrix slice_rows(const Matrix& m, std::size_t first, std::size_t count);
// Copies cols [first, first + count).
Matrix slice_cols(const Matrix& m, std::size_t first, std::size_t count);
void write_cols(Matrix& dst, std::size_t first, const Matrix& src);

Matrix softmax_rows(const Matrix& m);

Matrix layer_norm(const Matrix& m, std::span<const double> gamma,
                  std::span<const double> beta, double eps);

// Half-pixel-center bilinear resampling with edge clamping, per channel.
Grid bilinear_resize(const Grid& g, std::size_t out_h, std::size_t out_w);

// 3x3 convolution, stride 1, zero padding. kernel is indexed
// [ky][kx][in_channel][out_channel] (9 * C_in * C_out values).
Grid conv3x3(const Grid& g, std::span<const double> kernel, std::size_t out_channels);

// Kernel whose center tap is the channel identity.
std::vector<double> identity_kernel3x3(std::size_t channels);

}  // namespace stakit
