#pragma once

#include <cstddef>

#include "lab/matrix.hpp"
#include "lab/rng.hpp"

namespace lab::design {

using numerics::Matrix;
using numerics::SeededRng;
using numerics::Vec;

/// Linear regression setting: p covariate dimensions, n design rows, noise
/// variance sigma2.  Requires n >= p >= 1 and sigma2 > 0.
struct RegressionSpec {
  std::size_t p = 0;
  std::size_t n = 0;
  double sigma2 = 0.0;

  RegressionSpec(std::size_t p, std::size_t n, double sigma2);
};

/// n-by-p design whose rows all have unit Euclidean norm and whose Gram matrix
/// X^T X is invertible (smallest eigenvalue above 1e-12).
class DesignMatrix {
 public:
  explicit DesignMatrix(Matrix x);

  const Matrix& x() const { return x_; }
  const Matrix& gram() const { return gram_; }
  std::size_t n() const { return x_.rows(); }
  std::size_t p() const { return x_.cols(); }

 private:
  Matrix x_;
  Matrix gram_;
};

/// Expected squared prediction error at a fresh unit-sphere test point:
/// sigma^2 + (sigma^2 / p) * tr((X^T X)^-1).
double generalization_error(const RegressionSpec& spec, const DesignMatrix& d);

/// Lower bound over unit-row designs, sigma^2 * (1 + p / n); attained exactly
/// when X^T X = (n / p) I.
double optimal_error(const RegressionSpec& spec);

/// Stacks n/p independent random orthogonal blocks, giving X^T X = (n/p) I.
/// In strict mode n must be a multiple of p; otherwise the remainder rows are
/// the leading rows of one more orthogonal block and the design is merely
/// near-optimal.
DesignMatrix construct_optimal(const RegressionSpec& spec, SeededRng& rng, bool strict = true);

/// Uniformly random unit rows, redrawn (never in practice) if the Gram matrix
/// comes out singular.
DesignMatrix random_unit_design(const RegressionSpec& spec, SeededRng& rng);

struct InfeasibilityReport {
  double analytic_floor = 0.0;  // ||u u^T - I/p||_F for any unit u
  double min_deviation = 0.0;   // smallest observed ||X^T X + u u^T - ((n+1)/p) I||_F
  std::size_t trials = 0;
};

/// One-point extension of a balanced design can never stay balanced: for any
/// unit row u the deviation from ((n+1)/p) I is bounded below by
/// sqrt((1 - 1/p)^2 + (p - 1)/p^2).  Measures the bound over random candidate
/// rows plus the p standard basis rows.  Requires p >= 2 and a design with
/// X^T X = (n/p) I.
InfeasibilityReport greedy_infeasibility_check(const DesignMatrix& d, std::size_t trials,
                                               SeededRng& rng);

/// Monte-Carlo estimate of the generalization error: replicate i (on rng
/// substream i) draws y = X beta + noise, fits least squares, and scores one
/// fresh noisy test point on the unit sphere.  Replicate contributions are
/// accumulated in index order.
double monte_carlo_error(const RegressionSpec& spec, const DesignMatrix& d, const Vec& beta,
                         std::size_t replicates, SeededRng& rng);

/// Unit-norm coefficient vector used by the harness when none is supplied.
Vec default_beta(std::size_t p);

}  // namespace lab::design
