#pragma once

#include <functional>

#include "lab/matrix.hpp"
#include "lab/rng.hpp"

namespace lab::numerics {

struct SpectralDecomposition {
  Vec eigenvalues;     // ascending
  Matrix eigenvectors; // orthonormal columns, column i pairs with eigenvalues[i]
};

/// Full eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Input must be symmetric within 1e-12 entrywise.  Sweeps continue until the
/// off-diagonal Frobenius norm falls below 1e-12 (measured relative to the
/// input norm once that norm exceeds one).
SpectralDecomposition sym_eig(const Matrix& m);

/// Inverse square root of a symmetric positive definite matrix, computed as
/// Q diag(lambda^-1/2) Q^T after adding ridge*I.  The ridge keeps nearly
/// singular inputs usable; a non-positive eigenvalue after the shift is fatal.
Matrix spd_inverse_sqrt(const Matrix& m, double ridge = 1e-8);

/// Central-difference gradient of a scalar function.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h);

/// Central-difference Jacobian of a vector function; entry (i, j) holds
/// d f_i / d x_j.
Matrix finite_diff_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h);

/// Haar-distributed p-by-p orthogonal matrix: Gaussian fill followed by
/// modified Gram-Schmidt with the positive-diagonal sign convention.
Matrix random_orthogonal(std::size_t p, SeededRng& rng);

}  // namespace lab::numerics
