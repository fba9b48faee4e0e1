#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lab/matrix.hpp"
#include "lab/rng.hpp"

namespace lab::control {

using numerics::Matrix;
using numerics::SeededRng;
using numerics::Vec;

struct BoxSpace {
  Vec lo, hi;
};

struct FiniteActionSet {
  std::vector<Vec> actions;
};

using ActionSpace = std::variant<BoxSpace, FiniteActionSet>;

/// Finite-horizon control problem in reward (maximization) form:
/// maximize sum_k r(s_k, a_k, k) + h(s_n) subject to s_{k+1} = f(s_k, a_k, k).
/// Derivative callbacks are optional; when absent they fall back to central
/// finite differences with step 1e-5 * max(1, ||point||).
struct ControlProblem {
  std::size_t state_dim = 0;
  std::size_t horizon = 0;
  std::function<Vec(const Vec&, const Vec&, std::size_t)> dynamics;
  std::function<double(const Vec&, const Vec&, std::size_t)> reward;
  std::function<double(const Vec&)> terminal;
  ActionSpace actions;
  Vec initial_state;

  std::function<Matrix(const Vec&, const Vec&, std::size_t)> dynamics_jac_state;
  std::function<Matrix(const Vec&, const Vec&, std::size_t)> dynamics_jac_action;
  std::function<Vec(const Vec&, const Vec&, std::size_t)> reward_grad_state;
  std::function<Vec(const Vec&, const Vec&, std::size_t)> reward_grad_action;
  std::function<Vec(const Vec&)> terminal_grad;
};

struct Trajectory {
  std::vector<Vec> states;   // horizon + 1 entries
  std::vector<Vec> actions;  // horizon entries
  double total_return = 0.0;
};

/// Adjoint sequence lambda_0..lambda_n; lambda_n = grad h(s_n) and
/// lambda_k = dr/ds + (df/ds)^T lambda_{k+1} along the given trajectory.
struct CostateTrajectory {
  std::vector<Vec> lambda;
};

/// One-step exchange rate r(s, a, k) + f(s, a, k) . lambda.
double hamiltonian(const ControlProblem& p, const Vec& s, const Vec& a, const Vec& lambda_next,
                   std::size_t k);

/// Gradient of the Hamiltonian in the action, using analytic callbacks when
/// present and finite differences otherwise.
Vec hamiltonian_action_gradient(const ControlProblem& p, const Vec& s, const Vec& a,
                                const Vec& lambda_next, std::size_t k);

Trajectory rollout(const ControlProblem& p, const std::vector<Vec>& actions);

CostateTrajectory costate_sweep(const ControlProblem& p, const Trajectory& traj);

struct SolveResult {
  Trajectory trajectory;
  CostateTrajectory costates;
  bool converged = false;
  std::size_t iterations = 0;
  /// Largest |dH/da| component over interior action coordinates at exit;
  /// 0 for finite action sets.
  double max_hamiltonian_gradient = 0.0;
  std::string diagnostic;
};

/// Alternates forward rollout, backward costate sweep and per-step Hamiltonian
/// maximization: exhaustive argmax for finite sets (ties to the lowest index),
/// projected gradient ascent with backtracking for boxes.  A local method; on
/// concave problems it reaches the global optimum.  Non-convergence is
/// reported through the result, which still carries the best iterate.
SolveResult forward_backward_solve(const ControlProblem& p, const std::vector<Vec>& init_actions,
                                   std::size_t max_iters, double tol);

/// Tabular Markov decision process.  transitions[a](s, s') is the probability
/// of moving s -> s' under action a; rewards(s, a) is the stage reward.
/// Exactly one of horizon or discount must be set.  Optional terminal values
/// are added at the end of a finite horizon.
struct FiniteMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<Matrix> transitions;
  Matrix rewards;
  std::optional<std::size_t> horizon;
  std::optional<double> discount;
  Vec terminal;  // empty means zero

  void validate() const;
};

struct ValueIterationResult {
  bool finite_horizon = false;
  /// Finite horizon: values[k][s] for k = 0..h (values[h] is the terminal
  /// layer).  Discounted: a single layer values[0].
  std::vector<Vec> values;
  /// Greedy policy, lowest action index on ties; finite horizon: policy[k][s]
  /// for k = 0..h-1, discounted: policy[0][s].
  std::vector<std::vector<std::size_t>> policy;
  std::size_t iterations = 0;
};

ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol);

/// Independent one-step lookahead recomputation of the Bellman equation at the
/// returned values; the solver promises a residual at or below its tolerance.
double bellman_residual(const FiniteMdp& mdp, const ValueIterationResult& result);

/// Exact expected return of a (possibly time-varying) deterministic policy
/// from every start state.  For finite-horizon MDPs policy[k][s] indexes the
/// action at step k; discounted evaluation uses policy[0] throughout.
Vec policy_value(const FiniteMdp& mdp, const std::vector<std::vector<std::size_t>>& policy);

/// Monte-Carlo return of a policy from one start state; rollout i draws its
/// transitions from rng substream i, so two policies evaluated with the same
/// rng see matched noise.
double policy_return_mc(const FiniteMdp& mdp, const std::vector<std::vector<std::size_t>>& policy,
                        std::size_t start_state, std::size_t rollouts, const SeededRng& rng);

/// Linear-quadratic regulator instance: dynamics s' = A s + B a, stage reward
/// -(s^T Qc s + a^T Rc a), terminal reward -s^T Qc s.
struct LqrSpec {
  Matrix a, b, qc, rc;
  std::size_t horizon = 0;
  Vec s0;
};

struct LqrSolution {
  /// value_matrices[k] = P_k with value V(s, k) = -s^T P_k s, k = 0..horizon.
  std::vector<Matrix> value_matrices;
  /// gains[k] = K_k with optimal action a_k = -K_k s_k, k = 0..horizon-1.
  std::vector<Matrix> gains;
};

/// Backward Riccati recursion; the closed-form oracle the iterative solver is
/// checked against.  Qc must be positive semidefinite and Rc positive
/// definite.
LqrSolution lqr_oracle(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                       std::size_t horizon);

/// ControlProblem wrapper around an LQR instance with box-bounded actions.
/// Analytic derivatives are attached unless with_derivatives is false.
ControlProblem make_lqr_problem(const LqrSpec& spec, double action_bound,
                                bool with_derivatives = true);

Trajectory lqr_optimal_trajectory(const LqrSpec& spec, const LqrSolution& sol);

double lqr_value(const LqrSolution& sol, const Vec& s0);

}  // namespace lab::control
