#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "doctest.h"
#include "lab/errors.hpp"
#include "lab/control.hpp"
#include "lab/fisher.hpp"
#include "lab/matrix.hpp"
#include "lab/rng.hpp"

using lab::ErrorKind;
using lab::LabError;
using lab::numerics::Matrix;
using lab::numerics::SeededRng;
using lab::numerics::Vec;
namespace fisher = lab::fisher;

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

std::vector<fisher::Obs> draw(const fisher::LikelihoodModel& model, const Vec& theta,
                              std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  std::vector<fisher::Obs> data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(model.sample(theta, rng));
  return data;
}

double relative_frobenius_gap(const Matrix& a, const Matrix& b) {
  return (a - b).frobenius_norm() / b.frobenius_norm();
}

/// Minimal model with no closed-form information matrix, for the unsupported
/// paths.
class FlatModel final : public fisher::LikelihoodModel {
 public:
  std::string name() const override { return "flat"; }
  std::size_t param_dim() const override { return 1; }
  double log_lik(const Vec&, const fisher::Obs&) const override { return 0.0; }
  Vec grad_log_lik(const Vec&, const fisher::Obs&) const override { return Vec{0.0}; }
  bool has_exact_fisher() const override { return false; }
  Matrix exact_fisher(const Vec&) const override {
    lab::fail(ErrorKind::UnsupportedModel, "flat model has no information matrix");
  }
  fisher::Obs sample(const Vec&, SeededRng&) const override { return {0.0}; }
};

}  // namespace

TEST_SUITE_BEGIN("fisher");

TEST_CASE("closed-form information matrices match hand calculations") {
  const auto bernoulli = fisher::make_model("bernoulli");
  CHECK(bernoulli->exact_fisher({0.3})(0, 0) ==
        doctest::Approx(1.0 / 0.21).epsilon(1e-14));
  CHECK(bernoulli->exact_fisher({0.5})(0, 0) == doctest::Approx(4.0).epsilon(1e-14));

  const auto gauss = fisher::make_model("gauss-mean");
  CHECK(gauss->exact_fisher({-2.0})(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  const auto categorical = fisher::make_model("categorical");
  const Matrix f = categorical->exact_fisher({0.2, 0.3});
  CHECK(f(0, 0) == doctest::Approx(7.0).epsilon(1e-13));
  CHECK(f(0, 1) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(f(1, 0) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(f(1, 1) == doctest::Approx(16.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("every built-in family passes its own construction cross-checks") {
  for (const char* name : {"bernoulli", "gauss-mean", "categorical", "logistic"}) {
    const auto model = fisher::make_model(name);
    fisher::validate_model(*model, fisher::default_theta_star(*model));
  }
  CHECK(kind_of([] { fisher::make_model("poisson"); }) == ErrorKind::UnsupportedModel);
}

TEST_CASE("parameter validation distinguishes shape from domain problems") {
  const auto model = fisher::make_model("bernoulli");
  CHECK(kind_of([&] { model->require_param({0.5, 0.5}); }) == ErrorKind::DimensionMismatch);
  CHECK(kind_of([&] { model->require_param({1.2}); }) == ErrorKind::InvalidParameter);
  CHECK(kind_of([&] { model->log_lik({-0.1}, {1.0}); }) == ErrorKind::InvalidParameter);
}

TEST_CASE("score covariance and curvature estimates agree with the closed form") {
  for (const char* name : {"bernoulli", "gauss-mean"}) {
    const auto model = fisher::make_model(name);
    const Vec theta = fisher::default_theta_star(*model);
    const Matrix exact = model->exact_fisher(theta);
    SeededRng r1(100), r2(200);
    const Matrix outer = fisher::fisher_outer(*model, theta, 30000, r1);
    const Matrix curvature = fisher::fisher_hessian(*model, theta, 30000, r2);
    CHECK(relative_frobenius_gap(outer, exact) < 0.05);
    CHECK(relative_frobenius_gap(curvature, exact) < 0.05);
    CHECK(relative_frobenius_gap(outer, curvature) < 0.08);
  }
}

TEST_CASE("information-matrix estimators are reproducible") {
  const auto model = fisher::make_model("categorical");
  const Vec theta = fisher::default_theta_star(*model);
  SeededRng r1(9), r2(9);
  const Matrix a = fisher::fisher_outer(*model, theta, 5000, r1);
  const Matrix b = fisher::fisher_outer(*model, theta, 5000, r2);
  CHECK((a - b).max_abs() == 0.0);
}

TEST_CASE("documented single-step updates are reproduced") {
  // RMSprop from zero state with g = 1, alpha = 0.1, beta2 = 0.9:
  // v = 0.1, step = -0.1 / (sqrt(0.1) + 1e-8).
  fisher::OptimizerHyper hyper;
  hyper.alpha = 0.1;
  hyper.beta2 = 0.9;
  hyper.eps = 1e-8;
  auto state = fisher::make_state(fisher::Algorithm::Rmsprop, {0.0}, hyper);
  state = fisher::rmsprop_step(std::move(state), {1.0});
  CHECK(std::abs(state.theta[0] - (-0.1 / (std::sqrt(0.1) + 1e-8))) < 1e-12);
  CHECK(state.t == 1);

  // Adam's bias-corrected first step collapses to -alpha * sign(g) at eps = 0.
  fisher::OptimizerHyper adam_hyper;
  adam_hyper.alpha = 0.05;
  adam_hyper.eps = 0.0;
  SeededRng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    const double g = (rng.next_double() - 0.5) * 20.0;
    auto s = fisher::make_state(fisher::Algorithm::Adam, {0.7}, adam_hyper);
    s = fisher::adam_step(std::move(s), {g});
    const double expected = 0.7 - 0.05 * (g > 0.0 ? 1.0 : -1.0);
    CHECK(std::abs(s.theta[0] - expected) < 1e-12);
  }

  // Plain gradient descent moves exactly -alpha g.
  fisher::OptimizerHyper sgd_hyper;
  sgd_hyper.alpha = 0.25;
  auto sg = fisher::make_state(fisher::Algorithm::Sgd, {1.0}, sgd_hyper);
  sg = fisher::sgd_step(std::move(sg), {2.0});
  CHECK(sg.theta[0] == 0.5);
}

TEST_CASE("unit-information flow is bit-identical to plain gradient ascent") {
  // The Gaussian-mean family has F = I, so the preconditioner is exactly the
  // identity once the ridge is off and both algorithms must take the same
  // floating-point path.
  const auto model = fisher::make_model("gauss-mean");
  const auto data = draw(*model, {0.4}, 300, 7);
  fisher::Schedule schedule;
  schedule.alpha = 0.2;
  schedule.ridge = 0.0;
  schedule.max_steps = 200;
  schedule.grad_tol = 1e-10;
  const auto flow =
      fisher::optimize(*model, fisher::Algorithm::FisherFlow, {-1.0}, data, schedule);
  const auto sgd = fisher::optimize(*model, fisher::Algorithm::Sgd, {-1.0}, data, schedule);
  REQUIRE(flow.theta_hat.size() == sgd.theta_hat.size());
  CHECK(std::memcmp(flow.theta_hat.data(), sgd.theta_hat.data(),
                    sizeof(double) * flow.theta_hat.size()) == 0);
  CHECK(flow.steps == sgd.steps);
  CHECK(flow.converged);
}

TEST_CASE("flow contracts monotonically onto the Gaussian sample mean") {
  const auto model = fisher::make_model("gauss-mean");
  const auto data = draw(*model, {0.0}, 500, 3);
  double mean = 0.0;
  for (const auto& x : data) mean += x[0];
  mean /= static_cast<double>(data.size());

  fisher::Schedule schedule;
  schedule.alpha = 0.3;
  schedule.max_steps = 200;
  schedule.grad_tol = 1e-10;
  schedule.record_trace = true;
  const auto fit =
      fisher::optimize(*model, fisher::Algorithm::FisherFlow, {1.5}, data, schedule);
  CHECK(fit.converged);
  CHECK(std::abs(fit.theta_hat[0] - mean) < 1e-8);
  for (std::size_t i = 0; i + 1 < fit.trace.size(); ++i)
    CHECK(fit.trace[i + 1].loss <= fit.trace[i].loss + 1e-12);
}

TEST_CASE("cautious Adam descends the Bernoulli loss monotonically") {
  // Total step budget is far below the distance to the optimum, so every
  // update moves toward it through convex territory and the loss can only
  // fall: 40 steps of at most ~alpha each from theta = 0.25 cannot overshoot
  // a sample mean near 0.5.
  const auto model = fisher::make_model("bernoulli");
  const auto data = draw(*model, {0.5}, 400, 11);
  fisher::Schedule schedule;
  schedule.alpha = 0.004;
  schedule.max_steps = 40;
  schedule.grad_tol = 1e-12;
  schedule.record_trace = true;
  const auto fit = fisher::optimize(*model, fisher::Algorithm::Adam, {0.25}, data, schedule);
  REQUIRE(fit.trace.size() >= 40);
  for (std::size_t i = 0; i + 1 < fit.trace.size(); ++i)
    CHECK(fit.trace[i + 1].loss <= fit.trace[i].loss + 1e-12);
  CHECK(fit.trace.back().grad_inf_norm < fit.trace.front().grad_inf_norm);
}

TEST_CASE("separable logistic data sends the iterates off to infinity") {
  // Deterministic labels over the fixed covariate pool are linearly
  // separable, so the likelihood has no maximizer: the loss should keep
  // falling toward zero while the parameter norm grows without converging.
  const auto model = fisher::make_model("logistic");
  const auto* logistic = dynamic_cast<const fisher::LogisticModel*>(model.get());
  REQUIRE(logistic != nullptr);
  std::vector<fisher::Obs> data;
  for (int repeat = 0; repeat < 5; ++repeat)
    for (const Vec& z : logistic->covariate_pool()) {
      double s = 0.0;
      for (double zj : z) s += zj;
      fisher::Obs obs{s > 0.0 ? 1.0 : 0.0};
      obs.insert(obs.end(), z.begin(), z.end());
      data.push_back(std::move(obs));
    }

  fisher::Schedule schedule;
  schedule.alpha = 0.5;
  schedule.max_steps = 3000;
  schedule.grad_tol = 1e-8;
  const auto fit =
      fisher::optimize(*model, fisher::Algorithm::Sgd, {0.0, 0.0, 0.0}, data, schedule);
  CHECK_FALSE(fit.converged);
  CHECK(fit.final_loss < 0.1);
  CHECK(lab::numerics::norm2(fit.theta_hat) > 3.0);
}

TEST_CASE("steps that leave the parameter domain are reported as divergence") {
  const auto model = fisher::make_model("bernoulli");
  std::vector<fisher::Obs> ones(50, fisher::Obs{1.0});
  fisher::Schedule schedule;
  schedule.alpha = 0.5;
  schedule.max_steps = 50;
  CHECK(kind_of([&] {
          fisher::optimize(*model, fisher::Algorithm::Sgd, {0.9}, ones, schedule);
        }) == ErrorKind::Diverged);
}

TEST_CASE("replicated estimator variance respects the information bound") {
  const auto model = fisher::make_model("bernoulli");
  SeededRng rng(21);
  const auto study = fisher::cramer_rao_study(*model, {0.5}, 150, 150, rng);
  CHECK(study.failures == 0);
  CHECK(study.bound_satisfied);
  CHECK(std::abs(study.mean_estimate[0] - 0.5) < 0.05);
  CHECK(study.estimates.rows() == 150);
  CHECK(study.empirical_covariance.is_symmetric(1e-15));
}

TEST_CASE("underpowered studies are refused") {
  const auto model = fisher::make_model("bernoulli");
  SeededRng rng(22);
  CHECK(kind_of([&] { fisher::cramer_rao_study(*model, {0.5}, 50, 50, rng); }) ==
        ErrorKind::UnreliableStudy);
}

TEST_CASE("second-moment accumulator recovers the Fisher diagonal") {
  SeededRng r1(5);
  const auto bernoulli = fisher::make_model("bernoulli");
  const auto b = fisher::diagonal_fisher_consistency(*bernoulli, {0.5}, 20000, r1);
  // At theta = 1/2 every squared score is exactly 4, so the corrected
  // accumulator is exact up to rounding.
  CHECK(b.fisher_diagonal[0] == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(b.max_relative_deviation < 1e-9);

  SeededRng r2(6);
  const auto gauss = fisher::make_model("gauss-mean");
  const auto g = fisher::diagonal_fisher_consistency(*gauss, {0.0}, 50000, r2);
  CHECK(g.max_relative_deviation < 0.15);
  CHECK_FALSE(g.degenerate);
}

TEST_CASE("models without a closed-form information matrix are rejected") {
  const FlatModel flat;
  SeededRng rng(1);
  CHECK(kind_of([&] { fisher::diagonal_fisher_consistency(flat, {0.0}, 100, rng); }) ==
        ErrorKind::UnsupportedModel);
}

TEST_CASE("likelihood climbing and optimal control land on the same estimate") {
  // Estimating theta can be phrased as a one-step control problem whose
  // reward is the mean log-likelihood of choosing action theta; the sweep
  // solver's stationary action must then equal the optimizer's MLE.
  const auto model = fisher::make_model("bernoulli");
  const auto data = draw(*model, {0.5}, 400, 17);
  double mean = 0.0;
  for (const auto& x : data) mean += x[0];
  mean /= static_cast<double>(data.size());

  fisher::Schedule schedule;
  schedule.alpha = 0.3;
  schedule.max_steps = 5000;
  schedule.grad_tol = 1e-10;
  const auto fit =
      fisher::optimize(*model, fisher::Algorithm::FisherFlow, {0.3}, data, schedule);

  lab::control::ControlProblem p;
  p.state_dim = 1;
  p.horizon = 1;
  p.initial_state = {0.0};
  p.dynamics = [](const Vec& s, const Vec&, std::size_t) { return s; };
  p.reward = [&](const Vec&, const Vec& a, std::size_t) {
    double total = 0.0;
    for (const auto& x : data) total += model->log_lik({a[0]}, x);
    return total / static_cast<double>(data.size());
  };
  p.terminal = [](const Vec&) { return 0.0; };
  p.actions = lab::control::BoxSpace{{0.01}, {0.99}};
  // The log-likelihood's curvature here is ~4, so an accepted line-search step
  // near the optimum improves the objective by only |g|^2/8 — that dips below
  // the rounding noise of the objective once |g| is ~3e-8, which puts the
  // reachable gradient tolerance for this instance near 1e-7.
  const auto fb = lab::control::forward_backward_solve(p, {{0.3}}, 500, 1e-7);

  CHECK(fb.converged);
  CHECK(std::abs(fb.trajectory.actions[0][0] - mean) < 1e-6);
  CHECK(std::abs(fit.theta_hat[0] - mean) < 1e-6);
  CHECK(std::abs(fb.trajectory.actions[0][0] - fit.theta_hat[0]) < 1e-6);
}

TEST_SUITE_END();
