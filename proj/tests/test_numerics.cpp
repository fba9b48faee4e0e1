#include <cmath>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "lab/errors.hpp"
#include "lab/matrix.hpp"
#include "lab/numerics.hpp"
#include "lab/parallel.hpp"
#include "lab/rng.hpp"

using lab::ErrorKind;
using lab::LabError;
using lab::numerics::Matrix;
using lab::numerics::SeededRng;
using lab::numerics::Vec;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const LabError& e) {
    return e.kind();
  }
  FAIL("expected a LabError");
  return ErrorKind::UsageError;
}

double reconstruction_gap(const Matrix& m) {
  const auto eig = lab::numerics::sym_eig(m);
  const Matrix lambda = Matrix::diagonal(eig.eigenvalues);
  const Matrix rebuilt = eig.eigenvectors * lambda * eig.eigenvectors.transposed();
  return (rebuilt - m).max_abs();
}

}  // namespace

TEST_SUITE_BEGIN("numerics");

TEST_CASE("matrix construction rejects non-finite entries") {
  CHECK(kind_of([] { Matrix(1, 2, {1.0, std::nan("")}); }) == ErrorKind::InvalidMatrix);
  CHECK(kind_of([] { Matrix(1, 1, {1.0, 2.0}); }) == ErrorKind::InvalidMatrix);
}

TEST_CASE("matrix round-trips through the text exchange format") {
  const Matrix m(2, 3, {1.0, -0.25, 3e-17, 4.0, 5.5, -6.125});
  std::stringstream buffer;
  lab::numerics::write_matrix(buffer, m);
  const Matrix back = lab::numerics::read_matrix(buffer);
  CHECK((back - m).max_abs() == 0.0);
}

TEST_CASE("format_real round-trips doubles exactly") {
  // Subnormals are excluded only because std::stod reports them as underflow.
  for (double v : {0.0, 0.1, -1.0 / 3.0, 1e300, 4.9e-300, -2.5e-308, 123456789.123456789}) {
    const std::string s = lab::numerics::format_real(v);
    CHECK(std::stod(s) == v);
  }
}

TEST_CASE("eigenvalues of [[2,1],[1,2]] are 1 and 3") {
  const auto eig = lab::numerics::sym_eig(Matrix(2, 2, {2.0, 1.0, 1.0, 2.0}));
  REQUIRE(eig.eigenvalues.size() == 2);
  CHECK(eig.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eig.eigenvalues[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("symmetric eigendecomposition reconstructs the input") {
  SeededRng rng(17);
  for (std::size_t p : {2, 3, 5, 8}) {
    Matrix m(p, p);
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = r; c < p; ++c) m(r, c) = m(c, r) = rng.next_gaussian();
    CHECK(reconstruction_gap(m) < 1e-10);
    const auto eig = lab::numerics::sym_eig(m);
    const Matrix q = eig.eigenvectors;
    CHECK((q.transposed() * q - Matrix::identity(p)).max_abs() < 1e-12);
    for (std::size_t i = 0; i + 1 < p; ++i)
      CHECK(eig.eigenvalues[i] <= eig.eigenvalues[i + 1]);
  }
}

TEST_CASE("eigendecomposition rejects asymmetric input") {
  CHECK(kind_of([] { lab::numerics::sym_eig(Matrix(2, 2, {1.0, 0.5, 0.0, 1.0})); }) ==
        ErrorKind::InvalidMatrix);
}

TEST_CASE("inverse square root inverts diag(4,9) exactly") {
  const Matrix a(2, 2, {4.0, 0.0, 0.0, 9.0});
  const Matrix s = lab::numerics::spd_inverse_sqrt(a, 0.0);
  CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(s(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK((s * a * s - Matrix::identity(2)).max_abs() < 1e-12);
}

TEST_CASE("inverse square root whitens a random SPD matrix") {
  SeededRng rng(5);
  const Matrix q = lab::numerics::random_orthogonal(4, rng);
  const Matrix a = q * Matrix::diagonal({0.5, 1.0, 2.0, 7.0}) * q.transposed();
  const Matrix s = lab::numerics::spd_inverse_sqrt(a.symmetrized(), 0.0);
  CHECK((s * a * s - Matrix::identity(4)).max_abs() < 1e-10);
}

TEST_CASE("inverse square root refuses indefinite input") {
  CHECK(kind_of([] {
          lab::numerics::spd_inverse_sqrt(Matrix(2, 2, {-1.0, 0.0, 0.0, 1.0}), 0.0);
        }) == ErrorKind::NotPositiveDefinite);
}

TEST_CASE("finite differences recover a quadratic gradient") {
  const auto f = [](const Vec& x) { return x[0] * x[0] + 3.0 * x[1]; };
  const Vec g = lab::numerics::finite_diff_gradient(f, {1.5, -2.0}, 1e-6);
  CHECK(g[0] == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("random orthogonal matrices are orthogonal") {
  SeededRng rng(99);
  for (std::size_t p : {2, 5, 10}) {
    const Matrix q = lab::numerics::random_orthogonal(p, rng);
    CHECK((q.transposed() * q - Matrix::identity(p)).max_abs() < 1e-12);
  }
}

TEST_CASE("generator is deterministic and substreams are position independent") {
  SeededRng a(42), b(42);
  for (int i = 0; i < 16; ++i) CHECK(a.next_u64() == b.next_u64());

  SeededRng fresh(7);
  SeededRng advanced(7);
  for (int i = 0; i < 100; ++i) advanced.next_double();
  SeededRng s1 = fresh.substream(5);
  SeededRng s2 = advanced.substream(5);
  for (int i = 0; i < 16; ++i) CHECK(s1.next_u64() == s2.next_u64());
}

TEST_CASE("uniform draws stay inside [0, 1)") {
  SeededRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.next_double();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) CHECK(rng.next_index(7) < 7);
}

TEST_CASE("parallel chunks cover every index exactly once") {
  const std::size_t count = 10000;
  std::vector<int> hits(count, 0);
  std::mutex mu;
  lab::numerics::parallel_chunks(count, 256, [&](std::size_t begin, std::size_t end) {
    std::scoped_lock lock(mu);
    for (std::size_t i = begin; i < end; ++i) ++hits[i];
  });
  for (std::size_t i = 0; i < count; ++i) REQUIRE(hits[i] == 1);
}

TEST_SUITE_END();
