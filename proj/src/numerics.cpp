#include "lab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lab/errors.hpp"

namespace lab::numerics {

namespace {

double off_diagonal_frobenius(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c)
      if (r != c) acc += a(r, c) * a(r, c);
  return std::sqrt(acc);
}

}  // namespace

SpectralDecomposition sym_eig(const Matrix& m) {
  if (m.rows() != m.cols()) fail(ErrorKind::InvalidMatrix, "eigendecomposition needs a square matrix");
  const std::size_t p = m.rows();
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = r + 1; c < p; ++c)
      if (std::fabs(m(r, c) - m(c, r)) > 1e-12)
        fail(ErrorKind::InvalidMatrix, "matrix is not symmetric within 1e-12");

  Matrix a = m.symmetrized();
  Matrix v = Matrix::identity(p);
  const double tol = 1e-12 * std::max(1.0, a.frobenius_norm());

  // Cyclic-by-row sweeps; each rotation zeroes one off-diagonal pair.
  // Convergence is quadratic, so the sweep cap is generous.
  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_frobenius(a) < tol) break;
    for (std::size_t pp = 0; pp + 1 < p; ++pp) {
      for (std::size_t qq = pp + 1; qq < p; ++qq) {
        const double apq = a(pp, qq);
        if (apq == 0.0) continue;
        const double tau = (a(qq, qq) - a(pp, pp)) / (2.0 * apq);
        const double t = (tau >= 0.0) ? 1.0 / (tau + std::sqrt(1.0 + tau * tau))
                                      : -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // A <- J^T A J for the rotation J in the (pp, qq) plane.
        for (std::size_t k = 0; k < p; ++k) {
          if (k == pp || k == qq) continue;
          const double akp = a(k, pp);
          const double akq = a(k, qq);
          a(k, pp) = c * akp - s * akq;
          a(pp, k) = a(k, pp);
          a(k, qq) = s * akp + c * akq;
          a(qq, k) = a(k, qq);
        }
        const double app = a(pp, pp);
        const double aqq = a(qq, qq);
        a(pp, pp) = app - t * apq;
        a(qq, qq) = aqq + t * apq;
        a(pp, qq) = 0.0;
        a(qq, pp) = 0.0;
        for (std::size_t k = 0; k < p; ++k) {
          const double vkp = v(k, pp);
          const double vkq = v(k, qq);
          v(k, pp) = c * vkp - s * vkq;
          v(k, qq) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (sweep == kMaxSweeps && off_diagonal_frobenius(a) >= tol)
    fail(ErrorKind::NotConverged, "Jacobi sweeps did not reduce the off-diagonal norm");

  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&a](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  SpectralDecomposition out;
  out.eigenvalues.resize(p);
  out.eigenvectors = Matrix(p, p);
  for (std::size_t j = 0; j < p; ++j) {
    out.eigenvalues[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < p; ++i) out.eigenvectors(i, j) = v(i, order[j]);
  }
  return out;
}

Matrix spd_inverse_sqrt(const Matrix& m, double ridge) {
  if (ridge < 0.0) fail(ErrorKind::InvalidDimension, "ridge must be nonnegative");
  Matrix shifted = m;
  for (std::size_t i = 0; i < std::min(m.rows(), m.cols()); ++i) shifted(i, i) += ridge;
  const SpectralDecomposition eig = sym_eig(shifted);
  for (double lambda : eig.eigenvalues)
    if (lambda <= 0.0)
      fail(ErrorKind::NotPositiveDefinite, "eigenvalue " + format_real(lambda) + " after ridge shift");
  const std::size_t p = m.rows();
  Matrix scaled(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    const double w = 1.0 / std::sqrt(eig.eigenvalues[i]);
    for (std::size_t r = 0; r < p; ++r) scaled(r, i) = eig.eigenvectors(r, i) * w;
  }
  return (scaled * eig.eigenvectors.transposed()).symmetrized();
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::InvalidDimension, "finite-difference step must be positive");
  Vec grad(x.size());
  Vec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      fail(ErrorKind::NonFiniteFunction, "objective is non-finite near the probe point");
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Matrix finite_diff_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::InvalidDimension, "finite-difference step must be positive");
  Vec probe = x;
  Matrix jac;
  for (std::size_t j = 0; j < x.size(); ++j) {
    probe[j] = x[j] + h;
    const Vec fp = f(probe);
    probe[j] = x[j] - h;
    const Vec fm = f(probe);
    probe[j] = x[j];
    if (fp.size() != fm.size()) fail(ErrorKind::DimensionMismatch, "function output size changed");
    if (jac.rows() == 0) jac = Matrix(fp.size(), x.size());
    for (std::size_t i = 0; i < fp.size(); ++i) {
      if (!std::isfinite(fp[i]) || !std::isfinite(fm[i]))
        fail(ErrorKind::NonFiniteFunction, "function is non-finite near the probe point");
      jac(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    }
  }
  if (jac.rows() == 0) jac = Matrix(f(x).size(), 0);
  return jac;
}

Matrix random_orthogonal(std::size_t p, SeededRng& rng) {
  if (p == 0) fail(ErrorKind::InvalidDimension, "orthogonal matrix needs p >= 1");
  Matrix q(p, p);
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < p; ++c) q(r, c) = rng.next_gaussian();

  // Modified Gram-Schmidt, two passes per column for orthogonality near
  // machine precision.  Column norms are positive with probability one; a
  // degenerate draw is replaced and the column redone.
  for (std::size_t j = 0; j < p; ++j) {
    for (int attempt = 0;; ++attempt) {
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < j; ++i) {
          double proj = 0.0;
          for (std::size_t r = 0; r < p; ++r) proj += q(r, i) * q(r, j);
          for (std::size_t r = 0; r < p; ++r) q(r, j) -= proj * q(r, i);
        }
      }
      double norm = 0.0;
      for (std::size_t r = 0; r < p; ++r) norm += q(r, j) * q(r, j);
      norm = std::sqrt(norm);
      if (norm > 1e-12) {
        for (std::size_t r = 0; r < p; ++r) q(r, j) /= norm;
        break;
      }
      if (attempt > 64) fail(ErrorKind::NotConverged, "orthogonalization kept collapsing");
      for (std::size_t r = 0; r < p; ++r) q(r, j) = rng.next_gaussian();
    }
  }
  return q;
}

}  // namespace lab::numerics
