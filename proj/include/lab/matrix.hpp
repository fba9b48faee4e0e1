#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace lab::numerics {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.  Construction from data rejects NaN and
/// infinity; in-place mutation through operator() is unchecked.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);  // zero-filled
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(const Vec& d);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  const std::vector<double>& data() const noexcept { return data_; }

  Matrix transposed() const;
  Matrix operator*(const Matrix& rhs) const;
  Vec operator*(const Vec& rhs) const;
  Matrix operator+(const Matrix& rhs) const;
  Matrix operator-(const Matrix& rhs) const;
  Matrix scaled(double factor) const;
  Matrix symmetrized() const;  // (A + A^T) / 2, square only

  double frobenius_norm() const;
  double max_abs() const;
  bool is_symmetric(double tol) const;
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix outer(const Vec& u, const Vec& v);
double dot(const Vec& a, const Vec& b);
double norm2(const Vec& v);
double norm_inf(const Vec& v);

/// Shortest decimal form at 17 significant digits; round-trips any double.
std::string format_real(double value);

// Plain text exchange format: first line "rows cols", then one line per row of
// whitespace-separated decimals.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

}  // namespace lab::numerics
