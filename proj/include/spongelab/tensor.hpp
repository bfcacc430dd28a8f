#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace spongelab {

/// Dense row-major 2-D array of doubles.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  static Tensor row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Tensor& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_str() const;

  void fill(double v);
  bool all_finite() const;

  /// FNV-1a over shape and the raw bit patterns of the values.
  std::uint64_t checksum() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain kernels shared by the autograd graph and the inference path so that
// both produce bit-identical values. Loops are k-outer so that every output
// element accumulates its terms in ascending k order.

/// a[m×k] · b[k×n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ · b, with a[k×m], b[k×n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a · bᵀ, with a[m×k], b[n×k]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[m×n] + bias[1×n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);

/// Throws NumericalError naming `what` if any value is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

/// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace spongelab
