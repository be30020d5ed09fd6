#include "vidfocus/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vidfocus/error.hpp"

namespace vidfocus {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() +
                     " vs " + b.shape_string());
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix " + shape_string() + " needs " +
                     std::to_string(rows_ * cols_) + " elements, got " +
                     std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw RangeError("matrix element " + std::to_string(i) + " is not finite");
    }
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

std::string Matrix::shape_string() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Dual::Dual(Matrix v, Matrix g) : value(std::move(v)), grad(std::move(g)) {
  require_same_shape(value, grad, "Dual");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + a.shape_string() + " by " +
                     b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transposed: cannot multiply " + a.shape_string() +
                     " by transpose of " + b.shape_string());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("transposed_matmul: cannot multiply transpose of " +
                     a.shape_string() + " by " + b.shape_string());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      auto out_row = out.row(i);
      const double aki = a_row[i];
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
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
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.data()) v *= factor;
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols()) {
    throw ShapeError("vstack: column mismatch " + top.shape_string() + " vs " +
                     bottom.shape_string());
  }
  std::vector<double> data = top.data();
  data.insert(data.end(), bottom.data().begin(), bottom.data().end());
  return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

Matrix row_slice(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.rows()) {
    throw ShapeError("row_slice: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of " + m.shape_string());
  }
  std::vector<double> data(m.data().begin() + begin * m.cols(),
                           m.data().begin() + end * m.cols());
  return Matrix(end - begin, m.cols(), std::move(data));
}

double sum(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v;
  return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

Matrix row_softmax(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto in = m.row(i);
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

Matrix softmax_backward(const Matrix& softmax_out, const Matrix& upstream_grad) {
  require_same_shape(softmax_out, upstream_grad, "softmax_backward");
  Matrix out(softmax_out.rows(), softmax_out.cols());
  for (std::size_t i = 0; i < softmax_out.rows(); ++i) {
    const auto s = softmax_out.row(i);
    const auto g = upstream_grad.row(i);
    double dot = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) dot += g[k] * s[k];
    auto dst = out.row(i);
    for (std::size_t j = 0; j < s.size(); ++j) dst[j] = s[j] * (g[j] - dot);
  }
  return out;
}

CheckReport finite_diff_check(const ScalarFunction& f, const Matrix& x,
                              const Matrix& analytic_grad, double step,
                              double tol) {
  if (!(step > 0.0)) throw InvalidArgument("finite_diff_check: step must be > 0");
  if (!(tol > 0.0)) throw InvalidArgument("finite_diff_check: tol must be > 0");
  require_same_shape(x, analytic_grad, "finite_diff_check");

  CheckReport report;
  report.coordinates = x.size();
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double original = x.data()[i];
    probe.data()[i] = original + step;
    const double f_plus = f(probe);
    probe.data()[i] = original - step;
    const double f_minus = f(probe);
    probe.data()[i] = original;

    double rel;
    double numeric = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      ++report.non_finite_evaluations;
      rel = std::numeric_limits<double>::infinity();
    } else {
      numeric = (f_plus - f_minus) / (2.0 * step);
      const double analytic = analytic_grad.data()[i];
      const double denom =
          std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      rel = std::abs(analytic - numeric) / denom;
    }
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.worst_analytic = analytic_grad.data()[i];
      report.worst_numeric = numeric;
    }
  }
  report.passed =
      report.non_finite_evaluations == 0 && report.max_rel_error <= tol;
  return report;
}

}  // namespace vidfocus
