#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lab/control.hpp"
#include "lab/design.hpp"
#include "lab/fisher.hpp"
#include "lab/kinematics.hpp"
#include "lab/numerics.hpp"
#include "lab/rng.hpp"

namespace py = pybind11;

using lab::numerics::Matrix;
using lab::numerics::SeededRng;
using lab::numerics::Vec;

namespace {

using Rows = std::vector<std::vector<double>>;

Matrix to_matrix(const Rows& rows, const std::string& what) {
  if (rows.empty() || rows[0].empty())
    throw py::value_error(what + ": expected a nonempty list of rows");
  const std::size_t cols = rows[0].size();
  std::vector<double> entries;
  entries.reserve(rows.size() * cols);
  for (const auto& row : rows) {
    if (row.size() != cols) throw py::value_error(what + ": ragged rows");
    entries.insert(entries.end(), row.begin(), row.end());
  }
  return Matrix(rows.size(), cols, std::move(entries));
}

Rows from_matrix(const Matrix& m) {
  Rows rows(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
  return rows;
}

py::dict ngram_series(const std::vector<std::uint32_t>& symbols, std::uint32_t alphabet,
                      std::size_t order, double smoothing) {
  const lab::kinematics::TokenStream stream(
      std::vector<lab::kinematics::Symbol>(symbols.begin(), symbols.end()), alphabet);
  const auto model = lab::kinematics::fit_ngram(stream, order, smoothing);
  const auto series = lab::kinematics::kinematics_series(model, stream);
  py::dict out;
  out["velocity"] = series.velocity;
  out["acceleration"] = series.acceleration;
  out["distance"] = series.distance;
  return out;
}

std::vector<double> expected_bayes_velocity_curve(const std::vector<double>& law_probs,
                                                  double prior, std::size_t horizon) {
  const lab::kinematics::FixedIidModel law{Vec(law_probs)};
  const lab::kinematics::BayesPredictor model(
      static_cast<lab::kinematics::Symbol>(law_probs.size()), prior);
  return lab::kinematics::expected_velocity_curve(law, model, horizon);
}

double design_error(std::size_t p, std::size_t n, double sigma2, const std::string& mode,
                    std::uint64_t seed) {
  const lab::design::RegressionSpec spec(p, n, sigma2);
  SeededRng rng(seed);
  const lab::design::DesignMatrix d =
      mode == "optimal" ? lab::design::construct_optimal(spec, rng, false)
                        : lab::design::random_unit_design(spec, rng);
  return lab::design::generalization_error(spec, d);
}

double optimal_error(std::size_t p, std::size_t n, double sigma2) {
  return lab::design::optimal_error(lab::design::RegressionSpec(p, n, sigma2));
}

double greedy_floor(std::size_t p, std::uint64_t seed) {
  const lab::design::RegressionSpec spec(p, p, 1.0);
  SeededRng rng(seed);
  const auto d = lab::design::construct_optimal(spec, rng);
  return lab::design::greedy_infeasibility_check(d, 200, rng).analytic_floor;
}

py::dict lqr_compare(const Rows& a, const Rows& b, const Rows& qc, const Rows& rc,
                     const std::vector<double>& s0, std::size_t horizon) {
  lab::control::LqrSpec spec;
  spec.a = to_matrix(a, "A");
  spec.b = to_matrix(b, "B");
  spec.qc = to_matrix(qc, "Qc");
  spec.rc = to_matrix(rc, "Rc");
  spec.s0 = s0;
  spec.horizon = horizon;
  const auto sol = lab::control::lqr_oracle(spec.a, spec.b, spec.qc, spec.rc, horizon);
  const auto problem = lab::control::make_lqr_problem(spec, 1e9);
  const std::vector<Vec> zero(horizon, Vec(spec.b.cols(), 0.0));
  const auto fb = lab::control::forward_backward_solve(problem, zero, 5000, 1e-6);
  py::dict out;
  out["j_forward_backward"] = fb.trajectory.total_return;
  out["j_riccati"] = lab::control::lqr_optimal_trajectory(spec, sol).total_return;
  out["j_value_matrix"] = lab::control::lqr_value(sol, s0);
  out["converged"] = fb.converged;
  out["p0"] = from_matrix(sol.value_matrices.front());
  return out;
}

py::dict value_iteration_py(const std::vector<Rows>& transitions, const Rows& rewards,
                            std::optional<std::size_t> horizon, std::optional<double> discount,
                            double tol) {
  lab::control::FiniteMdp mdp;
  for (const auto& t : transitions) mdp.transitions.push_back(to_matrix(t, "transitions"));
  mdp.rewards = to_matrix(rewards, "rewards");
  mdp.n_states = mdp.rewards.rows();
  mdp.n_actions = mdp.rewards.cols();
  mdp.horizon = horizon;
  mdp.discount = discount;
  const auto result = lab::control::value_iteration(mdp, tol);
  py::dict out;
  out["values"] = result.values.front();
  out["policy"] = result.policy.front();
  out["bellman_residual"] = lab::control::bellman_residual(mdp, result);
  out["iterations"] = result.iterations;
  return out;
}

Rows exact_fisher(const std::string& model_name, const std::vector<double>& theta) {
  const auto model = lab::fisher::make_model(model_name);
  return from_matrix(model->exact_fisher(Vec(theta)));
}

py::dict mle_fit(const std::string& model_name, const std::string& algo_name, std::size_t n,
                 std::uint64_t seed, double alpha, double decay, std::size_t max_steps,
                 double grad_tol) {
  const auto model = lab::fisher::make_model(model_name);
  const auto algo = lab::fisher::algorithm_from_string(algo_name);
  const Vec theta_star = lab::fisher::default_theta_star(*model);
  SeededRng rng(seed);
  std::vector<lab::fisher::Obs> data;
  data.reserve(n);
  for (std::size_t i = 0; i < n; ++i) data.push_back(model->sample(theta_star, rng));
  lab::fisher::Schedule schedule;
  schedule.alpha = alpha;
  schedule.decay = decay;
  schedule.max_steps = max_steps;
  schedule.grad_tol = grad_tol;
  const auto fit = lab::fisher::optimize(*model, algo, theta_star, data, schedule);
  py::dict out;
  out["theta_hat"] = fit.theta_hat;
  out["converged"] = fit.converged;
  out["steps"] = fit.steps;
  out["final_loss"] = fit.final_loss;
  return out;
}

py::dict cramer_rao(const std::string& model_name, std::size_t n, std::size_t replicates,
                    std::uint64_t seed) {
  const auto model = lab::fisher::make_model(model_name);
  SeededRng rng(seed);
  const auto study = lab::fisher::cramer_rao_study(
      *model, lab::fisher::default_theta_star(*model), n, replicates, rng);
  py::dict out;
  out["bound_satisfied"] = study.bound_satisfied;
  out["min_eig_gap"] = study.min_eig_gap;
  out["slack_delta"] = study.slack_delta;
  out["mean_estimate"] = study.mean_estimate;
  out["failures"] = study.failures;
  out["empirical_covariance"] = from_matrix(study.empirical_covariance);
  out["crlb_reference"] = from_matrix(study.crlb_reference);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Token-stream kinematics, A-optimal design, discrete optimal control and "
            "Fisher-preconditioned estimation";

  m.def("ngram_series", &ngram_series, py::arg("symbols"), py::arg("alphabet"),
        py::arg("order") = 2, py::arg("smoothing") = 1.0,
        "Velocity / acceleration / distance series of a corpus under its own fitted model");
  m.def("expected_bayes_velocity_curve", &expected_bayes_velocity_curve, py::arg("law_probs"),
        py::arg("prior") = 1.0, py::arg("horizon") = 8,
        "Exact expected surprisal curve of the add-prior predictor against an iid law");

  m.def("optimal_error", &optimal_error, py::arg("p"), py::arg("n"), py::arg("sigma2") = 1.0,
        "Lower bound sigma^2 (1 + p/n) on the prediction error of unit-row designs");
  m.def("design_error", &design_error, py::arg("p"), py::arg("n"), py::arg("sigma2") = 1.0,
        py::arg("mode") = "optimal", py::arg("seed") = 0,
        "Prediction error of a constructed (optimal) or random unit-row design");
  m.def("greedy_floor", &greedy_floor, py::arg("p"), py::arg("seed") = 0,
        "Analytic floor on the imbalance of any one-row extension of a balanced design");

  m.def("lqr_compare", &lqr_compare, py::arg("a"), py::arg("b"), py::arg("qc"), py::arg("rc"),
        py::arg("s0"), py::arg("horizon"),
        "Sweep-solver return against the Riccati oracle on one regulator instance");
  m.def("value_iteration", &value_iteration_py, py::arg("transitions"), py::arg("rewards"),
        py::arg("horizon") = std::nullopt, py::arg("discount") = std::nullopt,
        py::arg("tol") = 1e-10, "Optimal values and greedy policy of a tabular MDP");

  m.def("exact_fisher", &exact_fisher, py::arg("model"), py::arg("theta"),
        "Closed-form information matrix of a built-in likelihood model");
  m.def("mle_fit", &mle_fit, py::arg("model"), py::arg("algo") = "flow", py::arg("n") = 400,
        py::arg("seed") = 0, py::arg("alpha") = 0.3, py::arg("decay") = 1.0,
        py::arg("max_steps") = 20000, py::arg("grad_tol") = 1e-8,
        "Fit synthetic data drawn at the model's reference parameter");
  m.def("cramer_rao", &cramer_rao, py::arg("model"), py::arg("n") = 200,
        py::arg("replicates") = 200, py::arg("seed") = 0,
        "Replicated variance study against the inverse information matrix");
}
