#include "lab/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "lab/errors.hpp"
#include "lab/numerics.hpp"

namespace lab::control {

namespace {

double fd_step(const Vec& v) { return 1e-5 * std::max(1.0, numerics::norm2(v)); }

void check_finite(const Vec& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) fail(ErrorKind::NonFiniteDerivative, std::string(what) + " is non-finite");
}

Matrix jac_state(const ControlProblem& p, const Vec& s, const Vec& a, std::size_t k) {
  if (p.dynamics_jac_state) return p.dynamics_jac_state(s, a, k);
  try {
    return numerics::finite_diff_jacobian(
        [&](const Vec& probe) { return p.dynamics(probe, a, k); }, s, fd_step(s));
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::NonFiniteFunction)
      fail(ErrorKind::NonFiniteDerivative, "dynamics state Jacobian is non-finite");
    throw;
  }
}

Matrix jac_action(const ControlProblem& p, const Vec& s, const Vec& a, std::size_t k) {
  if (p.dynamics_jac_action) return p.dynamics_jac_action(s, a, k);
  try {
    return numerics::finite_diff_jacobian(
        [&](const Vec& probe) { return p.dynamics(s, probe, k); }, a, fd_step(a));
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::NonFiniteFunction)
      fail(ErrorKind::NonFiniteDerivative, "dynamics action Jacobian is non-finite");
    throw;
  }
}

Vec grad_reward_state(const ControlProblem& p, const Vec& s, const Vec& a, std::size_t k) {
  if (p.reward_grad_state) return p.reward_grad_state(s, a, k);
  try {
    return numerics::finite_diff_gradient(
        [&](const Vec& probe) { return p.reward(probe, a, k); }, s, fd_step(s));
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::NonFiniteFunction)
      fail(ErrorKind::NonFiniteDerivative, "reward state gradient is non-finite");
    throw;
  }
}

Vec grad_reward_action(const ControlProblem& p, const Vec& s, const Vec& a, std::size_t k) {
  if (p.reward_grad_action) return p.reward_grad_action(s, a, k);
  try {
    return numerics::finite_diff_gradient(
        [&](const Vec& probe) { return p.reward(s, probe, k); }, a, fd_step(a));
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::NonFiniteFunction)
      fail(ErrorKind::NonFiniteDerivative, "reward action gradient is non-finite");
    throw;
  }
}

Vec grad_terminal(const ControlProblem& p, const Vec& s) {
  if (p.terminal_grad) return p.terminal_grad(s);
  try {
    return numerics::finite_diff_gradient([&](const Vec& probe) { return p.terminal(probe); }, s,
                                          fd_step(s));
  } catch (const LabError& e) {
    if (e.kind() == ErrorKind::NonFiniteFunction)
      fail(ErrorKind::NonFiniteDerivative, "terminal gradient is non-finite");
    throw;
  }
}

std::size_t action_dim(const ControlProblem& p) {
  if (const auto* box = std::get_if<BoxSpace>(&p.actions)) return box->lo.size();
  const auto& set = std::get<FiniteActionSet>(p.actions);
  if (set.actions.empty()) fail(ErrorKind::InvalidDimension, "empty finite action set");
  return set.actions.front().size();
}

void validate_problem(const ControlProblem& p) {
  if (p.horizon == 0) fail(ErrorKind::InvalidDimension, "horizon must be >= 1");
  if (p.state_dim == 0) fail(ErrorKind::InvalidDimension, "state dimension must be >= 1");
  if (p.initial_state.size() != p.state_dim)
    fail(ErrorKind::DimensionMismatch, "initial state has the wrong dimension");
  if (!p.dynamics || !p.reward || !p.terminal)
    fail(ErrorKind::InvalidDimension, "dynamics, reward and terminal must all be set");
  if (const auto* box = std::get_if<BoxSpace>(&p.actions)) {
    if (box->lo.size() != box->hi.size() || box->lo.empty())
      fail(ErrorKind::DimensionMismatch, "box bounds must be nonempty and equal length");
    for (std::size_t i = 0; i < box->lo.size(); ++i)
      if (!(box->lo[i] <= box->hi[i]))
        fail(ErrorKind::InvalidDimension, "box lower bound exceeds upper bound");
  } else {
    const auto& set = std::get<FiniteActionSet>(p.actions);
    if (set.actions.empty()) fail(ErrorKind::InvalidDimension, "empty finite action set");
    for (const Vec& a : set.actions)
      if (a.size() != set.actions.front().size())
        fail(ErrorKind::DimensionMismatch, "finite actions must share one dimension");
  }
}

Vec clamp_to_box(const BoxSpace& box, Vec a) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i], box.lo[i], box.hi[i]);
  return a;
}

}  // namespace

double hamiltonian(const ControlProblem& p, const Vec& s, const Vec& a, const Vec& lambda_next,
                   std::size_t k) {
  const Vec next = p.dynamics(s, a, k);
  if (next.size() != lambda_next.size())
    fail(ErrorKind::DimensionMismatch, "costate dimension does not match the dynamics output");
  return p.reward(s, a, k) + numerics::dot(next, lambda_next);
}

Vec hamiltonian_action_gradient(const ControlProblem& p, const Vec& s, const Vec& a,
                                const Vec& lambda_next, std::size_t k) {
  Vec grad = grad_reward_action(p, s, a, k);
  const Matrix jfa = jac_action(p, s, a, k);
  if (jfa.rows() != lambda_next.size())
    fail(ErrorKind::DimensionMismatch, "costate dimension does not match the dynamics output");
  for (std::size_t j = 0; j < grad.size(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < jfa.rows(); ++i) acc += jfa(i, j) * lambda_next[i];
    grad[j] += acc;
  }
  check_finite(grad, "Hamiltonian action gradient");
  return grad;
}

Trajectory rollout(const ControlProblem& p, const std::vector<Vec>& actions) {
  validate_problem(p);
  if (actions.size() != p.horizon)
    fail(ErrorKind::DimensionMismatch, "need exactly one action per step");
  const std::size_t adim = action_dim(p);
  Trajectory traj;
  traj.states.reserve(p.horizon + 1);
  traj.states.push_back(p.initial_state);
  traj.actions = actions;
  double ret = 0.0;
  for (std::size_t k = 0; k < p.horizon; ++k) {
    if (actions[k].size() != adim)
      fail(ErrorKind::DimensionMismatch, "action " + std::to_string(k) + " has the wrong dimension");
    const Vec& s = traj.states.back();
    const double r = p.reward(s, actions[k], k);
    if (!std::isfinite(r)) fail(ErrorKind::NonFiniteFunction, "reward is non-finite");
    ret += r;
    Vec next = p.dynamics(s, actions[k], k);
    if (next.size() != p.state_dim)
      fail(ErrorKind::DimensionMismatch, "dynamics output has the wrong dimension");
    check_finite(next, "next state");
    traj.states.push_back(std::move(next));
  }
  const double h = p.terminal(traj.states.back());
  if (!std::isfinite(h)) fail(ErrorKind::NonFiniteFunction, "terminal reward is non-finite");
  traj.total_return = ret + h;
  return traj;
}

CostateTrajectory costate_sweep(const ControlProblem& p, const Trajectory& traj) {
  validate_problem(p);
  const std::size_t n = p.horizon;
  if (traj.states.size() != n + 1 || traj.actions.size() != n)
    fail(ErrorKind::DimensionMismatch, "trajectory does not match the problem horizon");
  CostateTrajectory costates;
  costates.lambda.assign(n + 1, Vec());
  costates.lambda[n] = grad_terminal(p, traj.states[n]);
  check_finite(costates.lambda[n], "terminal costate");
  for (std::size_t k = n; k-- > 0;) {
    const Vec& s = traj.states[k];
    const Vec& a = traj.actions[k];
    Vec lam = grad_reward_state(p, s, a, k);
    const Matrix jfs = jac_state(p, s, a, k);
    const Vec& lam_next = costates.lambda[k + 1];
    if (jfs.rows() != lam_next.size())
      fail(ErrorKind::DimensionMismatch, "costate dimension does not match the dynamics output");
    for (std::size_t j = 0; j < lam.size(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < jfs.rows(); ++i) acc += jfs(i, j) * lam_next[i];
      lam[j] += acc;
    }
    check_finite(lam, "costate");
    costates.lambda[k] = std::move(lam);
  }
  return costates;
}

namespace {

// Largest |dH/da| coordinate over actions, skipping coordinates pinned at a
// box face where the gradient may legitimately point outward.
double interior_stationarity(const ControlProblem& p, const Trajectory& traj,
                             const CostateTrajectory& costates) {
  const auto* box = std::get_if<BoxSpace>(&p.actions);
  if (box == nullptr) return 0.0;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.horizon; ++k) {
    const Vec g = hamiltonian_action_gradient(p, traj.states[k], traj.actions[k],
                                              costates.lambda[k + 1], k);
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double width = box->hi[j] - box->lo[j];
      const double margin = 1e-9 * std::max(1.0, std::isfinite(width) ? width : 1.0);
      const bool at_lo = traj.actions[k][j] <= box->lo[j] + margin;
      const bool at_hi = traj.actions[k][j] >= box->hi[j] - margin;
      if ((at_lo && g[j] < 0.0) || (at_hi && g[j] > 0.0)) continue;
      worst = std::max(worst, std::fabs(g[j]));
    }
  }
  return worst;
}

}  // namespace

SolveResult forward_backward_solve(const ControlProblem& p, const std::vector<Vec>& init_actions,
                                   std::size_t max_iters, double tol) {
  validate_problem(p);
  if (!(tol > 0.0)) fail(ErrorKind::InvalidDimension, "tolerance must be positive");

  std::vector<Vec> actions = init_actions;
  const auto* box = std::get_if<BoxSpace>(&p.actions);
  if (box != nullptr)
    for (Vec& a : actions) a = clamp_to_box(*box, std::move(a));

  SolveResult result;
  result.trajectory = rollout(p, actions);
  Trajectory best = result.trajectory;

  double eta = 1.0;
  std::size_t iter = 0;
  for (; iter < max_iters; ++iter) {
    const CostateTrajectory costates = costate_sweep(p, result.trajectory);

    if (box == nullptr) {
      // Finite action set: simultaneous per-step argmax of H given the
      // current costates, lowest index on ties.
      const auto& set = std::get<FiniteActionSet>(p.actions);
      std::vector<Vec> updated(p.horizon);
      bool changed = false;
      for (std::size_t k = 0; k < p.horizon; ++k) {
        double best_h = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t idx = 0; idx < set.actions.size(); ++idx) {
          const double h = hamiltonian(p, result.trajectory.states[k], set.actions[idx],
                                       costates.lambda[k + 1], k);
          if (h > best_h) {
            best_h = h;
            best_idx = idx;
          }
        }
        updated[k] = set.actions[best_idx];
        if (updated[k] != result.trajectory.actions[k]) changed = true;
      }
      if (!changed) {
        result.converged = true;
        break;
      }
      result.trajectory = rollout(p, updated);
      if (result.trajectory.total_return > best.total_return) best = result.trajectory;
      continue;
    }

    // Box actions: one projected gradient ascent step on the return, sized by
    // backtracking.  dJ/da_k equals dH/da_k at the swept costates, so the
    // sweep supplies the exact search direction.
    std::vector<Vec> grads(p.horizon);
    double projected_norm = 0.0;
    for (std::size_t k = 0; k < p.horizon; ++k) {
      grads[k] = hamiltonian_action_gradient(p, result.trajectory.states[k],
                                             result.trajectory.actions[k], costates.lambda[k + 1], k);
      for (std::size_t j = 0; j < grads[k].size(); ++j) {
        const double moved = std::clamp(result.trajectory.actions[k][j] + grads[k][j], box->lo[j],
                                        box->hi[j]) -
                             result.trajectory.actions[k][j];
        projected_norm = std::max(projected_norm, std::fabs(moved));
      }
    }
    if (projected_norm < tol) {
      result.converged = true;
      break;
    }

    bool accepted = false;
    while (eta >= 1e-18) {
      std::vector<Vec> candidate(p.horizon);
      for (std::size_t k = 0; k < p.horizon; ++k) {
        candidate[k] = result.trajectory.actions[k];
        for (std::size_t j = 0; j < candidate[k].size(); ++j)
          candidate[k][j] =
              std::clamp(candidate[k][j] + eta * grads[k][j], box->lo[j], box->hi[j]);
      }
      Trajectory trial = rollout(p, candidate);
      if (trial.total_return > result.trajectory.total_return) {
        result.trajectory = std::move(trial);
        if (result.trajectory.total_return > best.total_return) best = result.trajectory;
        eta = std::min(eta * 2.0, 1e6);
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) {
      result.diagnostic = "line search stalled at the numerical floor";
      break;
    }
  }

  result.iterations = iter;
  if (!result.converged) {
    if (best.total_return > result.trajectory.total_return) result.trajectory = best;
    if (result.diagnostic.empty())
      result.diagnostic = "iteration budget exhausted before the actions settled";
  }
  result.costates = costate_sweep(p, result.trajectory);
  result.max_hamiltonian_gradient = interior_stationarity(p, result.trajectory, result.costates);
  return result;
}

void FiniteMdp::validate() const {
  if (n_states == 0 || n_actions == 0)
    fail(ErrorKind::InvalidDimension, "need at least one state and one action");
  if (transitions.size() != n_actions)
    fail(ErrorKind::DimensionMismatch, "need one transition matrix per action");
  for (const Matrix& t : transitions) {
    if (t.rows() != n_states || t.cols() != n_states)
      fail(ErrorKind::DimensionMismatch, "transition matrices must be S x S");
    for (std::size_t s = 0; s < n_states; ++s) {
      double row_sum = 0.0;
      for (std::size_t s2 = 0; s2 < n_states; ++s2) {
        if (!(t(s, s2) >= 0.0))
          fail(ErrorKind::InvalidMatrix, "transition probabilities must be >= 0");
        row_sum += t(s, s2);
      }
      if (std::fabs(row_sum - 1.0) > 1e-12)
        fail(ErrorKind::InvalidMatrix, "transition row " + std::to_string(s) + " must sum to one");
    }
  }
  if (rewards.rows() != n_states || rewards.cols() != n_actions)
    fail(ErrorKind::DimensionMismatch, "reward table must be S x A");
  if (!rewards.all_finite()) fail(ErrorKind::InvalidMatrix, "rewards must be finite");
  if (horizon.has_value() == discount.has_value())
    fail(ErrorKind::InvalidDimension, "set exactly one of horizon or discount");
  if (horizon && *horizon == 0) fail(ErrorKind::InvalidDimension, "horizon must be >= 1");
  if (!terminal.empty() && terminal.size() != n_states)
    fail(ErrorKind::DimensionMismatch, "terminal values must have one entry per state");
}

namespace {

Vec terminal_layer(const FiniteMdp& mdp) {
  return mdp.terminal.empty() ? Vec(mdp.n_states, 0.0) : mdp.terminal;
}

// One Bellman backup: out[s] = max_a rewards(s,a) + gamma * sum_s' P_a(s,s') v[s'].
void backup(const FiniteMdp& mdp, const Vec& v, double gamma, Vec& out,
            std::vector<std::size_t>* argmax) {
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_a = 0;
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double q = mdp.rewards(s, a);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        q += gamma * mdp.transitions[a](s, s2) * v[s2];
      if (q > best) {
        best = q;
        best_a = a;
      }
    }
    out[s] = best;
    if (argmax) (*argmax)[s] = best_a;
  }
}

}  // namespace

ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol) {
  mdp.validate();
  if (!(tol > 0.0)) fail(ErrorKind::InvalidDimension, "tolerance must be positive");

  ValueIterationResult result;
  if (mdp.horizon) {
    const std::size_t h = *mdp.horizon;
    result.finite_horizon = true;
    result.values.assign(h + 1, Vec(mdp.n_states, 0.0));
    result.policy.assign(h, std::vector<std::size_t>(mdp.n_states, 0));
    result.values[h] = terminal_layer(mdp);
    for (std::size_t k = h; k-- > 0;)
      backup(mdp, result.values[k + 1], 1.0, result.values[k], &result.policy[k]);
    result.iterations = h;
    return result;
  }

  const double gamma = *mdp.discount;
  if (!(gamma >= 0.0) || gamma >= 1.0)
    fail(ErrorKind::InvalidDiscount, "discount must lie in [0, 1)");
  Vec v(mdp.n_states, 0.0);
  Vec next(mdp.n_states, 0.0);
  std::vector<std::size_t> policy(mdp.n_states, 0);
  std::size_t iter = 0;
  for (;; ++iter) {
    backup(mdp, v, gamma, next, &policy);
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
      delta = std::max(delta, std::fabs(next[s] - v[s]));
    std::swap(v, next);
    // Returning the freshly backed-up layer keeps the residual below
    // gamma * delta <= tol at exit.
    if (delta <= tol) break;
    if (iter > 100000000) fail(ErrorKind::NotConverged, "value iteration stalled");
  }
  result.finite_horizon = false;
  result.values.assign(1, v);
  result.policy.assign(1, policy);
  result.iterations = iter + 1;
  return result;
}

double bellman_residual(const FiniteMdp& mdp, const ValueIterationResult& result) {
  mdp.validate();
  double worst = 0.0;
  if (result.finite_horizon) {
    const std::size_t h = *mdp.horizon;
    for (std::size_t k = 0; k < h; ++k) {
      for (std::size_t s = 0; s < mdp.n_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
          double q = mdp.rewards(s, a);
          for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
            q += mdp.transitions[a](s, s2) * result.values[k + 1][s2];
          best = std::max(best, q);
        }
        worst = std::max(worst, std::fabs(result.values[k][s] - best));
      }
    }
    return worst;
  }
  const double gamma = *mdp.discount;
  const Vec& v = result.values[0];
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < mdp.n_actions; ++a) {
      double q = mdp.rewards(s, a);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        q += gamma * mdp.transitions[a](s, s2) * v[s2];
      best = std::max(best, q);
    }
    worst = std::max(worst, std::fabs(v[s] - best));
  }
  return worst;
}

Vec policy_value(const FiniteMdp& mdp, const std::vector<std::vector<std::size_t>>& policy) {
  mdp.validate();
  if (mdp.horizon) {
    const std::size_t h = *mdp.horizon;
    if (policy.size() != h)
      fail(ErrorKind::DimensionMismatch, "need one policy layer per step");
    Vec v = terminal_layer(mdp);
    for (std::size_t k = h; k-- > 0;) {
      Vec prev(mdp.n_states, 0.0);
      for (std::size_t s = 0; s < mdp.n_states; ++s) {
        const std::size_t a = policy[k][s];
        if (a >= mdp.n_actions) fail(ErrorKind::InvalidDimension, "policy action out of range");
        double q = mdp.rewards(s, a);
        for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
          q += mdp.transitions[a](s, s2) * v[s2];
        prev[s] = q;
      }
      v = std::move(prev);
    }
    return v;
  }
  // Discounted: solve v = r_pi + gamma P_pi v by iteration.
  const double gamma = *mdp.discount;
  if (policy.size() != 1) fail(ErrorKind::DimensionMismatch, "discounted policy has one layer");
  Vec v(mdp.n_states, 0.0);
  for (int iter = 0; iter < 1000000; ++iter) {
    Vec next(mdp.n_states, 0.0);
    double delta = 0.0;
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      const std::size_t a = policy[0][s];
      if (a >= mdp.n_actions) fail(ErrorKind::InvalidDimension, "policy action out of range");
      double q = mdp.rewards(s, a);
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2)
        q += gamma * mdp.transitions[a](s, s2) * v[s2];
      next[s] = q;
      delta = std::max(delta, std::fabs(q - v[s]));
    }
    v = std::move(next);
    if (delta <= 1e-14) break;
  }
  return v;
}

double policy_return_mc(const FiniteMdp& mdp, const std::vector<std::vector<std::size_t>>& policy,
                        std::size_t start_state, std::size_t rollouts, const SeededRng& rng) {
  mdp.validate();
  if (!mdp.horizon) fail(ErrorKind::InvalidDimension, "Monte-Carlo rollouts need a finite horizon");
  if (start_state >= mdp.n_states) fail(ErrorKind::InvalidDimension, "start state out of range");
  const std::size_t h = *mdp.horizon;
  const Vec terminal = terminal_layer(mdp);
  double acc = 0.0;
  for (std::size_t i = 0; i < rollouts; ++i) {
    SeededRng sub = rng.substream(i);
    std::size_t s = start_state;
    double ret = 0.0;
    for (std::size_t k = 0; k < h; ++k) {
      const std::size_t a = policy[k][s];
      ret += mdp.rewards(s, a);
      const double u = sub.next_double();
      double cum = 0.0;
      std::size_t next = mdp.n_states - 1;
      for (std::size_t s2 = 0; s2 < mdp.n_states; ++s2) {
        cum += mdp.transitions[a](s, s2);
        if (u < cum) {
          next = s2;
          break;
        }
      }
      s = next;
    }
    acc += ret + terminal[s];
  }
  return acc / static_cast<double>(rollouts);
}

LqrSolution lqr_oracle(const Matrix& a, const Matrix& b, const Matrix& qc, const Matrix& rc,
                       std::size_t horizon) {
  const std::size_t sdim = a.rows();
  const std::size_t adim = b.cols();
  if (a.cols() != sdim) fail(ErrorKind::InvalidMatrix, "A must be square");
  if (b.rows() != sdim) fail(ErrorKind::DimensionMismatch, "B must have one row per state");
  if (qc.rows() != sdim || qc.cols() != sdim)
    fail(ErrorKind::DimensionMismatch, "Qc must match the state dimension");
  if (rc.rows() != adim || rc.cols() != adim)
    fail(ErrorKind::DimensionMismatch, "Rc must match the action dimension");
  if (horizon == 0) fail(ErrorKind::InvalidDimension, "horizon must be >= 1");
  {
    const auto qe = numerics::sym_eig(qc);
    if (qe.eigenvalues.front() < -1e-10)
      fail(ErrorKind::NotPositiveDefinite, "Qc must be positive semidefinite");
    const auto re = numerics::sym_eig(rc);
    if (re.eigenvalues.front() <= 0.0)
      fail(ErrorKind::NotPositiveDefinite, "Rc must be positive definite");
  }

  LqrSolution sol;
  sol.value_matrices.assign(horizon + 1, Matrix());
  sol.gains.assign(horizon, Matrix());
  sol.value_matrices[horizon] = qc.symmetrized();
  const Matrix at = a.transposed();
  const Matrix bt = b.transposed();
  for (std::size_t k = horizon; k-- > 0;) {
    const Matrix& pn = sol.value_matrices[k + 1];
    const Matrix m = (rc + bt * pn * b).symmetrized();
    // Solve M K = B^T P A through the spectral inverse; M is SPD.
    const auto me = numerics::sym_eig(m);
    Matrix m_inv(adim, adim);
    for (std::size_t i = 0; i < adim; ++i)
      for (std::size_t j = 0; j < adim; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < adim; ++c)
          acc += me.eigenvectors(i, c) * me.eigenvectors(j, c) / me.eigenvalues[c];
        m_inv(i, j) = acc;
      }
    sol.gains[k] = m_inv * bt * pn * a;
    sol.value_matrices[k] = (qc + at * pn * a - at * pn * b * sol.gains[k]).symmetrized();
  }
  return sol;
}

ControlProblem make_lqr_problem(const LqrSpec& spec, double action_bound, bool with_derivatives) {
  const std::size_t adim = spec.b.cols();
  ControlProblem p;
  p.state_dim = spec.a.rows();
  p.horizon = spec.horizon;
  p.initial_state = spec.s0;
  const Matrix a = spec.a;
  const Matrix b = spec.b;
  const Matrix qc = spec.qc;
  const Matrix rc = spec.rc;
  p.dynamics = [a, b](const Vec& s, const Vec& act, std::size_t) {
    Vec next = a * s;
    const Vec drive = b * act;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += drive[i];
    return next;
  };
  p.reward = [qc, rc](const Vec& s, const Vec& act, std::size_t) {
    return -(numerics::dot(s, qc * s) + numerics::dot(act, rc * act));
  };
  p.terminal = [qc](const Vec& s) { return -numerics::dot(s, qc * s); };
  p.actions = BoxSpace{Vec(adim, -action_bound), Vec(adim, action_bound)};
  if (with_derivatives) {
    p.dynamics_jac_state = [a](const Vec&, const Vec&, std::size_t) { return a; };
    p.dynamics_jac_action = [b](const Vec&, const Vec&, std::size_t) { return b; };
    p.reward_grad_state = [qc](const Vec& s, const Vec&, std::size_t) {
      Vec g = qc * s;
      for (double& x : g) x *= -2.0;
      return g;
    };
    p.reward_grad_action = [rc](const Vec&, const Vec& act, std::size_t) {
      Vec g = rc * act;
      for (double& x : g) x *= -2.0;
      return g;
    };
    p.terminal_grad = [qc](const Vec& s) {
      Vec g = qc * s;
      for (double& x : g) x *= -2.0;
      return g;
    };
  }
  return p;
}

Trajectory lqr_optimal_trajectory(const LqrSpec& spec, const LqrSolution& sol) {
  std::vector<Vec> actions;
  actions.reserve(spec.horizon);
  Vec s = spec.s0;
  for (std::size_t k = 0; k < spec.horizon; ++k) {
    Vec a = sol.gains[k] * s;
    for (double& x : a) x = -x;
    Vec next = spec.a * s;
    const Vec drive = spec.b * a;
    for (std::size_t i = 0; i < next.size(); ++i) next[i] += drive[i];
    actions.push_back(std::move(a));
    s = std::move(next);
  }
  const ControlProblem p = make_lqr_problem(spec, std::numeric_limits<double>::infinity());
  return rollout(p, actions);
}

double lqr_value(const LqrSolution& sol, const Vec& s0) {
  return -numerics::dot(s0, sol.value_matrices.front() * s0);
}

}  // namespace lab::control
