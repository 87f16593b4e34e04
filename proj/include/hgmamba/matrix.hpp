#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

namespace hgmamba {

/// Dense row-major matrix of doubles. The only tensor type in the library;
/// vectors are 1xN matrices so parameter handling stays uniform.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool all_finite() const;
  void fill(double v);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Parameter tensor paired with its gradient accumulator.
struct GradSlot {
  Matrix value;
  Matrix grad;

  GradSlot() = default;
  explicit GradSlot(Matrix v) : value(std::move(v)) {
    grad = Matrix(value.rows(), value.cols());
  }
  void zero_grad() { grad.fill(0.0); }
};

/// C = A * B. Throws std::invalid_argument on shape mismatch. Accounts
/// 2*m*k*n FLOPs to the active component.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

/// Sums gradient rows into a 1xC bias gradient.
Matrix column_sums(const Matrix& a);

struct LayerNormCache {
  Matrix xhat;                  // standardized rows
  std::vector<double> inv_std;  // 1/sqrt(var + eps) per row
};

/// Row-wise standardization with learnable gain/bias (both 1xD), eps inside
/// the square root. Rejects zero-width rows.
Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias,
                  double eps, LayerNormCache* cache = nullptr);

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormGrads {
  Matrix x;
  Matrix gain;
  Matrix bias;
};

LayerNormGrads layer_norm_backward(const Matrix& grad_out,
                                   const LayerNormCache& cache,
                                   const Matrix& gain);

/// Numerically stable softmax of a vector (max subtraction). Throws on
/// non-finite input or empty vector.
std::vector<double> softmax(const std::vector<double>& logits);

/// Central-difference gradient of a scalar function at x, step h per entry.
/// The workhorse oracle for every backward pass in the test suite.
Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& x, double h = 1e-5);

/// max_i |a_i - b_i| over all entries; shapes must match.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// ||a - b|| / max(||a||, ||b||, floor) with L2 norms, used for gradient
/// comparisons where entries span magnitudes.
double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12);

void require_finite(const Matrix& m, const char* what);

}  // namespace hgmamba
