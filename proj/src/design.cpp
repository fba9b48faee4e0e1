#include "lab/design.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "lab/errors.hpp"
#include "lab/numerics.hpp"
#include "lab/parallel.hpp"

namespace lab::design {

RegressionSpec::RegressionSpec(std::size_t p_in, std::size_t n_in, double sigma2_in)
    : p(p_in), n(n_in), sigma2(sigma2_in) {
  if (p == 0) fail(ErrorKind::InvalidDimension, "p must be >= 1");
  if (n < p) fail(ErrorKind::InvalidDimension, "need n >= p");
  if (!(sigma2 > 0.0)) fail(ErrorKind::InvalidDimension, "sigma2 must be positive");
}

DesignMatrix::DesignMatrix(Matrix x) : x_(std::move(x)) {
  if (x_.rows() == 0 || x_.cols() == 0) fail(ErrorKind::InvalidDimension, "empty design");
  if (x_.rows() < x_.cols()) fail(ErrorKind::InvalidDimension, "need at least p rows");
  for (std::size_t r = 0; r < x_.rows(); ++r) {
    double norm_sq = 0.0;
    for (std::size_t c = 0; c < x_.cols(); ++c) norm_sq += x_(r, c) * x_(r, c);
    if (std::fabs(std::sqrt(norm_sq) - 1.0) > 1e-10)
      fail(ErrorKind::InvalidMatrix, "design row " + std::to_string(r) + " is not unit norm");
  }
  gram_ = (x_.transposed() * x_).symmetrized();
  const auto eig = numerics::sym_eig(gram_);
  if (eig.eigenvalues.front() <= 1e-12)
    fail(ErrorKind::SingularDesign, "Gram matrix is numerically singular");
}

double generalization_error(const RegressionSpec& spec, const DesignMatrix& d) {
  if (d.n() != spec.n || d.p() != spec.p)
    fail(ErrorKind::DimensionMismatch, "design shape does not match the requested (n, p)");
  const auto eig = numerics::sym_eig(d.gram());
  if (eig.eigenvalues.front() <= 1e-12)
    fail(ErrorKind::SingularDesign, "Gram matrix is numerically singular");
  double trace_inv = 0.0;
  for (double lambda : eig.eigenvalues) trace_inv += 1.0 / lambda;
  return spec.sigma2 + spec.sigma2 / static_cast<double>(spec.p) * trace_inv;
}

double optimal_error(const RegressionSpec& spec) {
  return spec.sigma2 * (1.0 + static_cast<double>(spec.p) / static_cast<double>(spec.n));
}

DesignMatrix construct_optimal(const RegressionSpec& spec, SeededRng& rng, bool strict) {
  if (strict && spec.n % spec.p != 0)
    fail(ErrorKind::BlockSizeError, "strict construction needs n to be a multiple of p");
  Matrix x(spec.n, spec.p);
  std::size_t written = 0;
  for (std::size_t block = 0; written < spec.n; ++block) {
    SeededRng sub = rng.substream(block);
    const Matrix q = numerics::random_orthogonal(spec.p, sub);
    for (std::size_t r = 0; r < spec.p && written < spec.n; ++r, ++written)
      for (std::size_t c = 0; c < spec.p; ++c) x(written, c) = q(r, c);
  }
  return DesignMatrix(std::move(x));
}

DesignMatrix random_unit_design(const RegressionSpec& spec, SeededRng& rng) {
  for (int attempt = 0; attempt < 100; ++attempt) {
    Matrix x(spec.n, spec.p);
    for (std::size_t r = 0; r < spec.n; ++r) {
      double norm_sq = 0.0;
      Vec row(spec.p);
      do {
        norm_sq = 0.0;
        for (std::size_t c = 0; c < spec.p; ++c) {
          row[c] = rng.next_gaussian();
          norm_sq += row[c] * row[c];
        }
      } while (norm_sq < 1e-24);
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (std::size_t c = 0; c < spec.p; ++c) x(r, c) = row[c] * inv;
    }
    try {
      return DesignMatrix(std::move(x));
    } catch (const LabError& e) {
      if (e.kind() != ErrorKind::SingularDesign) throw;
    }
  }
  fail(ErrorKind::SingularDesign, "random designs kept coming out singular");
}

InfeasibilityReport greedy_infeasibility_check(const DesignMatrix& d, std::size_t trials,
                                               SeededRng& rng) {
  const std::size_t p = d.p();
  if (p < 2) fail(ErrorKind::DegenerateDimension, "the floor is zero for p = 1");
  const double n = static_cast<double>(d.n());
  const double pd = static_cast<double>(p);
  const Matrix balanced_check = d.gram() - Matrix::identity(p).scaled(n / pd);
  if (balanced_check.frobenius_norm() > 1e-6)
    fail(ErrorKind::InvalidMatrix, "check expects a balanced design with X^T X = (n/p) I");

  const Matrix target = Matrix::identity(p).scaled((n + 1.0) / pd);
  auto deviation = [&](const Vec& u) {
    return (d.gram() + numerics::outer(u, u) - target).frobenius_norm();
  };

  InfeasibilityReport report;
  report.trials = trials;
  report.analytic_floor =
      std::sqrt((1.0 - 1.0 / pd) * (1.0 - 1.0 / pd) + (pd - 1.0) / (pd * pd));
  double min_dev = std::numeric_limits<double>::infinity();
  Vec u(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    u.assign(p, 0.0);
    u[i] = 1.0;
    min_dev = std::min(min_dev, deviation(u));
  }
  for (std::size_t trial = 0; trial < trials; ++trial) {
    double norm_sq = 0.0;
    do {
      norm_sq = 0.0;
      for (std::size_t c = 0; c < p; ++c) {
        u[c] = rng.next_gaussian();
        norm_sq += u[c] * u[c];
      }
    } while (norm_sq < 1e-24);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t c = 0; c < p; ++c) u[c] *= inv;
    min_dev = std::min(min_dev, deviation(u));
  }
  report.min_deviation = min_dev;
  return report;
}

double monte_carlo_error(const RegressionSpec& spec, const DesignMatrix& d, const Vec& beta,
                         std::size_t replicates, SeededRng& rng) {
  if (replicates == 0) fail(ErrorKind::InvalidDimension, "need at least one replicate");
  if (beta.size() != spec.p) fail(ErrorKind::DimensionMismatch, "beta length must equal p");
  if (d.n() != spec.n || d.p() != spec.p)
    fail(ErrorKind::DimensionMismatch, "design shape does not match the requested (n, p)");

  // Least-squares map (X^T X)^-1 X^T, fixed across replicates.
  const auto eig = numerics::sym_eig(d.gram());
  if (eig.eigenvalues.front() <= 1e-12)
    fail(ErrorKind::SingularDesign, "Gram matrix is numerically singular");
  const std::size_t p = spec.p;
  Matrix gram_inv(p, p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p; ++k)
        acc += eig.eigenvectors(i, k) * eig.eigenvectors(j, k) / eig.eigenvalues[k];
      gram_inv(i, j) = acc;
    }
  const Matrix solver = gram_inv * d.x().transposed();  // p x n
  const Vec mean_response = d.x() * beta;
  const double sigma = std::sqrt(spec.sigma2);

  // One squared test error per replicate, then a sequential sum in index
  // order so the thread budget cannot change the result.
  std::vector<double> per_replicate(replicates);
  numerics::parallel_chunks(replicates, 4096, [&](std::size_t begin, std::size_t end) {
    Vec y(spec.n);
    Vec test_point(p);
    for (std::size_t i = begin; i < end; ++i) {
      SeededRng sub = rng.substream(i);
      for (std::size_t r = 0; r < spec.n; ++r)
        y[r] = mean_response[r] + sigma * sub.next_gaussian();
      const Vec beta_hat = solver * y;
      double norm_sq = 0.0;
      do {
        norm_sq = 0.0;
        for (std::size_t c = 0; c < p; ++c) {
          test_point[c] = sub.next_gaussian();
          norm_sq += test_point[c] * test_point[c];
        }
      } while (norm_sq < 1e-24);
      const double inv = 1.0 / std::sqrt(norm_sq);
      double predicted = 0.0;
      double truth = 0.0;
      for (std::size_t c = 0; c < p; ++c) {
        predicted += test_point[c] * inv * beta_hat[c];
        truth += test_point[c] * inv * beta[c];
      }
      const double y_test = truth + sigma * sub.next_gaussian();
      per_replicate[i] = (y_test - predicted) * (y_test - predicted);
    }
  });
  double acc = 0.0;
  for (double e : per_replicate) acc += e;
  return acc / static_cast<double>(replicates);
}

Vec default_beta(std::size_t p) {
  Vec beta(p, 1.0 / std::sqrt(static_cast<double>(p)));
  return beta;
}

}  // namespace lab::design
