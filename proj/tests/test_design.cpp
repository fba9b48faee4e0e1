#include <cmath>
#include <functional>

#include "doctest.h"
#include "lab/design.hpp"
#include "lab/errors.hpp"
#include "lab/matrix.hpp"
#include "lab/rng.hpp"

using lab::ErrorKind;
using lab::LabError;
using lab::numerics::Matrix;
using lab::numerics::SeededRng;
namespace design = lab::design;

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

}  // namespace

TEST_SUITE_BEGIN("design");

TEST_CASE("identity design doubles the noise floor") {
  for (std::size_t p : {2, 5, 17}) {
    const design::RegressionSpec spec(p, p, 1.5);
    const design::DesignMatrix d{Matrix::identity(p)};
    CHECK(design::generalization_error(spec, d) == doctest::Approx(3.0).epsilon(1e-12));
  }
}

TEST_CASE("error lower bound is sigma^2 (1 + p/n)") {
  CHECK(design::optimal_error(design::RegressionSpec(4, 16, 2.0)) ==
        doctest::Approx(2.5).epsilon(1e-15));
  CHECK(design::optimal_error(design::RegressionSpec(3, 6, 1.0)) ==
        doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("stacked orthogonal blocks attain the bound exactly") {
  SeededRng rng(1);
  for (std::size_t p : {2, 3, 5}) {
    const design::RegressionSpec spec(p, 4 * p, 1.0);
    const design::DesignMatrix d = design::construct_optimal(spec, rng);
    const Matrix target = Matrix::identity(p).scaled(4.0);
    CHECK((d.gram() - target).max_abs() < 1e-12);
    CHECK(std::abs(design::generalization_error(spec, d) - design::optimal_error(spec)) < 1e-12);
  }
}

TEST_CASE("strict construction refuses ragged block counts") {
  SeededRng rng(2);
  CHECK(kind_of([&] {
          design::construct_optimal(design::RegressionSpec(3, 7, 1.0), rng);
        }) == ErrorKind::BlockSizeError);
  // The permissive mode pads with leading rows of one more block instead.
  const design::DesignMatrix d =
      design::construct_optimal(design::RegressionSpec(3, 7, 1.0), rng, false);
  CHECK(d.n() == 7);
  CHECK(d.p() == 3);
}

TEST_CASE("every random unit design sits above the bound") {
  SeededRng rng(3);
  const design::RegressionSpec spec(3, 9, 1.0);
  const double bound = design::optimal_error(spec);
  for (int trial = 0; trial < 200; ++trial) {
    const design::DesignMatrix d = design::random_unit_design(spec, rng);
    CHECK(design::generalization_error(spec, d) >= bound - 1e-12);
  }
}

TEST_CASE("designs with non-unit rows are rejected") {
  CHECK(kind_of([] { design::DesignMatrix{Matrix::identity(3).scaled(2.0)}; }) ==
        ErrorKind::InvalidMatrix);
}

TEST_CASE("one-row extensions of a balanced design miss balance by the analytic floor") {
  SeededRng rng(4);
  const design::DesignMatrix d =
      design::construct_optimal(design::RegressionSpec(2, 4, 1.0), rng);
  const design::InfeasibilityReport report = design::greedy_infeasibility_check(d, 500, rng);
  CHECK(report.analytic_floor == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(report.min_deviation >= report.analytic_floor - 1e-12);
  CHECK(report.trials >= 500);
}

TEST_CASE("the extension floor is undefined in one dimension") {
  SeededRng rng(5);
  const design::DesignMatrix d{Matrix::identity(1)};
  CHECK(kind_of([&] { design::greedy_infeasibility_check(d, 10, rng); }) ==
        ErrorKind::DegenerateDimension);
}

TEST_CASE("Monte-Carlo error estimate agrees with the trace formula") {
  const design::RegressionSpec spec(2, 8, 1.0);
  SeededRng rng(6);
  const design::DesignMatrix d = design::construct_optimal(spec, rng);
  const double analytic = design::generalization_error(spec, d);
  const double mc =
      design::monte_carlo_error(spec, d, design::default_beta(2), 20000, rng);
  CHECK(std::abs(mc - analytic) / analytic < 0.05);
}

TEST_CASE("Monte-Carlo estimates are reproducible") {
  const design::RegressionSpec spec(3, 9, 2.0);
  SeededRng build(7);
  const design::DesignMatrix d = design::construct_optimal(spec, build);
  SeededRng r1(8), r2(8);
  const double a = design::monte_carlo_error(spec, d, design::default_beta(3), 2000, r1);
  const double b = design::monte_carlo_error(spec, d, design::default_beta(3), 2000, r2);
  CHECK(a == b);
}

TEST_SUITE_END();
