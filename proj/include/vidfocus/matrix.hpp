#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace vidfocus {

// Dense row-major matrix of finite doubles. Immutable through the public
// interface except for explicit element access on a non-const instance.
class Matrix {
 public:
  Matrix() = default;
  // Zero-filled rows x cols.
  Matrix(std::size_t rows, std::size_t cols);
  // Throws ShapeError if data.size() != rows * cols, RangeError on a
  // non-finite element.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A value together with the gradient of some scalar with respect to it.
struct Dual {
  Dual(Matrix value, Matrix grad);
  Matrix value;
  Matrix grad;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
// a^T * b.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
// Vertical concatenation; column counts must agree.
Matrix vstack(const Matrix& top, const Matrix& bottom);
// Rows [begin, end).
Matrix row_slice(const Matrix& m, std::size_t begin, std::size_t end);
double sum(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Numerically stable softmax along each row.
Matrix row_softmax(const Matrix& m);

// Backward of row_softmax given its output s and the upstream gradient g:
// per row, grad_j = s_j * (g_j - sum_k g_k s_k).
Matrix softmax_backward(const Matrix& softmax_out, const Matrix& upstream_grad);

struct CheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  std::size_t non_finite_evaluations = 0;
  bool passed = false;
};

using ScalarFunction = std::function<double(const Matrix&)>;

// Compares analytic_grad against central differences of f at x, coordinate by
// coordinate. Relative error uses max(|analytic|, |numeric|, 1e-8) as
// denominator. Non-finite evaluations are counted and fail the check.
CheckReport finite_diff_check(const ScalarFunction& f, const Matrix& x,
                              const Matrix& analytic_grad, double step,
                              double tol);

}  // namespace vidfocus
