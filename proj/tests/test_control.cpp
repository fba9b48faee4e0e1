#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "lab/control.hpp"
#include "lab/errors.hpp"
#include "lab/matrix.hpp"
#include "lab/rng.hpp"

using lab::ErrorKind;
using lab::LabError;
using lab::numerics::Matrix;
using lab::numerics::SeededRng;
using lab::numerics::Vec;
namespace control = lab::control;

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

control::LqrSpec small_regulator(std::size_t horizon) {
  control::LqrSpec spec;
  spec.a = Matrix(2, 2, {1.0, 0.1, 0.0, 0.95});
  spec.b = Matrix(2, 1, {0.0, 0.1});
  spec.qc = Matrix::diagonal({1.0, 0.5});
  spec.rc = Matrix(1, 1, {0.1});
  spec.horizon = horizon;
  spec.s0 = {1.0, -0.5};
  return spec;
}

control::FiniteMdp random_mdp(SeededRng& rng, std::size_t states, std::size_t actions,
                              std::size_t horizon) {
  control::FiniteMdp mdp;
  mdp.n_states = states;
  mdp.n_actions = actions;
  mdp.horizon = horizon;
  mdp.rewards = Matrix(states, actions);
  for (std::size_t a = 0; a < actions; ++a) {
    Matrix t(states, states);
    for (std::size_t s = 0; s < states; ++s) {
      double total = 0.0;
      for (std::size_t s2 = 0; s2 < states; ++s2) {
        t(s, s2) = 0.05 + rng.next_double();
        total += t(s, s2);
      }
      for (std::size_t s2 = 0; s2 < states; ++s2) t(s, s2) /= total;
      mdp.rewards(s, a) = 2.0 * rng.next_double() - 1.0;
    }
    mdp.transitions.push_back(std::move(t));
  }
  return mdp;
}

/// Best value per start state over every deterministic time-varying policy.
Vec enumerate_best(const control::FiniteMdp& mdp) {
  const std::size_t slots = mdp.n_states * *mdp.horizon;
  std::size_t count = 1;
  for (std::size_t i = 0; i < slots; ++i) count *= mdp.n_actions;
  Vec best(mdp.n_states, -1e300);
  std::vector<std::vector<std::size_t>> policy(*mdp.horizon,
                                               std::vector<std::size_t>(mdp.n_states, 0));
  for (std::size_t code = 0; code < count; ++code) {
    std::size_t rest = code;
    for (std::size_t k = 0; k < *mdp.horizon; ++k)
      for (std::size_t s = 0; s < mdp.n_states; ++s) {
        policy[k][s] = rest % mdp.n_actions;
        rest /= mdp.n_actions;
      }
    const Vec value = control::policy_value(mdp, policy);
    for (std::size_t s = 0; s < mdp.n_states; ++s) best[s] = std::max(best[s], value[s]);
  }
  return best;
}

}  // namespace

TEST_SUITE_BEGIN("control");

TEST_CASE("one-step scalar regulator has the closed-form value matrix") {
  const auto sol = control::lqr_oracle(Matrix(1, 1, {1.0}), Matrix(1, 1, {1.0}),
                                       Matrix(1, 1, {1.0}), Matrix(1, 1, {1.0}), 1);
  REQUIRE(sol.value_matrices.size() == 2);
  CHECK(sol.value_matrices[1](0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  // P0 = Q + P1 - P1 B (R + B P1 B)^-1 B P1 = 1 + 1 - 1/2.
  CHECK(sol.value_matrices[0](0, 0) == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(sol.gains[0](0, 0) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("sweep solver reproduces the Riccati solution") {
  const control::LqrSpec spec = small_regulator(6);
  const auto sol = control::lqr_oracle(spec.a, spec.b, spec.qc, spec.rc, spec.horizon);
  const auto problem = control::make_lqr_problem(spec, 1e9);
  const std::vector<Vec> zero(spec.horizon, Vec(1, 0.0));
  // 1e-8 on the Hamiltonian gradient is the practical floor: tighter targets
  // drown in the rounding noise of the line search's return comparisons.
  const auto fb = control::forward_backward_solve(problem, zero, 2000, 1e-8);

  CHECK(fb.converged);
  const double j_oracle = control::lqr_optimal_trajectory(spec, sol).total_return;
  CHECK(std::abs(fb.trajectory.total_return - j_oracle) < 1e-6);
  CHECK(std::abs(control::lqr_value(sol, spec.s0) - j_oracle) < 1e-9);

  // Costates must line up with the value-function gradient -2 P_k s_k.
  for (std::size_t k = 0; k <= spec.horizon; ++k) {
    const Vec ps = sol.value_matrices[k] * fb.trajectory.states[k];
    for (std::size_t j = 0; j < ps.size(); ++j)
      CHECK(std::abs(fb.costates.lambda[k][j] + 2.0 * ps[j]) < 1e-4);
  }
}

TEST_CASE("finite-difference derivative fallback stays close to the oracle") {
  const control::LqrSpec spec = small_regulator(5);
  const auto sol = control::lqr_oracle(spec.a, spec.b, spec.qc, spec.rc, spec.horizon);
  const auto problem = control::make_lqr_problem(spec, 1e9, /*with_derivatives=*/false);
  const std::vector<Vec> zero(spec.horizon, Vec(1, 0.0));
  const auto fb = control::forward_backward_solve(problem, zero, 2000, 1e-8);
  const double j_oracle = control::lqr_optimal_trajectory(spec, sol).total_return;
  CHECK(std::abs(fb.trajectory.total_return - j_oracle) < 1e-5);
}

TEST_CASE("finite action sets are solved to the brute-force optimum") {
  control::ControlProblem p;
  p.state_dim = 1;
  p.horizon = 3;
  p.initial_state = {0.0};
  p.dynamics = [](const Vec& s, const Vec& a, std::size_t) { return Vec{s[0] + a[0]}; };
  p.reward = [](const Vec& s, const Vec& a, std::size_t) {
    const double move_cost = a[0] < -0.5 ? 0.3 : (a[0] > 0.5 ? 0.25 : 0.0);
    return 0.5 * s[0] - move_cost;
  };
  p.terminal = [](const Vec& s) { return 2.0 * s[0]; };
  p.actions = control::FiniteActionSet{{Vec{-1.0}, Vec{0.0}, Vec{1.0}}};

  // Exhaustive rollout over all 27 action sequences.
  double best = -1e300;
  std::array<int, 3> best_seq{0, 0, 0};
  const std::vector<Vec> choices{Vec{-1.0}, Vec{0.0}, Vec{1.0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const auto traj = control::rollout(p, {choices[i], choices[j], choices[k]});
        if (traj.total_return > best) {
          best = traj.total_return;
          best_seq = {i, j, k};
        }
      }
  CHECK(best == doctest::Approx(6.75).epsilon(1e-14));
  CHECK(best_seq == std::array<int, 3>{2, 2, 2});

  const auto fb =
      control::forward_backward_solve(p, std::vector<Vec>(3, Vec{0.0}), 100, 1e-10);
  CHECK(fb.converged);
  CHECK(fb.trajectory.total_return == doctest::Approx(best).epsilon(1e-13));
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(fb.trajectory.actions[k][0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("value iteration matches exhaustive policy enumeration") {
  SeededRng rng(31);
  for (int instance = 0; instance < 5; ++instance) {
    SeededRng sub = rng.substream(static_cast<std::uint64_t>(instance));
    const control::FiniteMdp mdp = random_mdp(sub, 2, 2, 3);
    const auto vi = control::value_iteration(mdp, 1e-12);
    const Vec best = enumerate_best(mdp);
    const Vec achieved = control::policy_value(mdp, vi.policy);
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      CHECK(std::abs(vi.values[0][s] - best[s]) < 1e-12);
      CHECK(std::abs(achieved[s] - best[s]) < 1e-12);
    }
  }
}

TEST_CASE("single-state discounted chain has value 1/(1-gamma)") {
  control::FiniteMdp mdp;
  mdp.n_states = 1;
  mdp.n_actions = 1;
  mdp.transitions = {Matrix(1, 1, {1.0})};
  mdp.rewards = Matrix(1, 1, {1.0});
  mdp.discount = 0.5;
  const auto vi = control::value_iteration(mdp, 1e-12);
  CHECK(std::abs(vi.values[0][0] - 2.0) < 1e-10);
  CHECK(control::bellman_residual(mdp, vi) <= 1e-12);
}

TEST_CASE("independent lookahead confirms the advertised residual") {
  SeededRng rng(77);
  control::FiniteMdp mdp = random_mdp(rng, 4, 3, 3);
  mdp.horizon.reset();
  mdp.discount = 0.9;
  const auto vi = control::value_iteration(mdp, 1e-9);
  CHECK(control::bellman_residual(mdp, vi) <= 1e-9);

  const Vec greedy = control::policy_value(mdp, vi.policy);
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    CHECK(std::abs(greedy[s] - vi.values[0][s]) < 1e-7);
}

TEST_CASE("Monte-Carlo policy evaluation tracks the exact value") {
  SeededRng rng(5);
  control::FiniteMdp mdp = random_mdp(rng, 3, 2, 4);
  const auto vi = control::value_iteration(mdp, 1e-12);
  const Vec exact = control::policy_value(mdp, vi.policy);
  const SeededRng mc_rng(123);
  const double est1 = control::policy_return_mc(mdp, vi.policy, 0, 4000, mc_rng);
  const double est2 = control::policy_return_mc(mdp, vi.policy, 0, 4000, mc_rng);
  CHECK(est1 == est2);
  CHECK(std::abs(est1 - exact[0]) < 0.1);
}

TEST_CASE("tabular validation rejects malformed inputs") {
  SeededRng rng(9);
  control::FiniteMdp both = random_mdp(rng, 2, 2, 2);
  both.discount = 0.9;  // horizon is already set
  CHECK(kind_of([&] { both.validate(); }) == ErrorKind::InvalidDimension);

  control::FiniteMdp bad_rows = random_mdp(rng, 2, 2, 2);
  bad_rows.transitions[0](0, 0) += 0.5;
  CHECK(kind_of([&] { bad_rows.validate(); }) == ErrorKind::InvalidMatrix);
}

TEST_SUITE_END();
