#include "lab/fisher.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "lab/errors.hpp"
#include "lab/numerics.hpp"
#include "lab/parallel.hpp"

namespace lab::fisher {

namespace {

constexpr std::size_t kChunk = 4096;

bool vec_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

double stable_sigmoid(double s) {
  if (s >= 0.0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

double softplus(double s) {
  return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
}

double binary_label(const Obs& x, std::size_t index) {
  const double raw = x[index];
  if (std::abs(raw) < 1e-9) return 0.0;
  if (std::abs(raw - 1.0) < 1e-9) return 1.0;
  fail(ErrorKind::InvalidObservation, "label must be 0 or 1, got " + std::to_string(raw));
}

/// Mean of per-sample dim x dim matrices, accumulated in fixed-size chunks and
/// reduced in chunk order so the result is independent of the thread budget.
Matrix chunked_matrix_mean(std::size_t count, std::size_t dim,
                           const std::function<void(std::size_t, Matrix&)>& add_sample) {
  const std::size_t n_chunks = (count + kChunk - 1) / kChunk;
  std::vector<Matrix> partial(n_chunks, Matrix(dim, dim));
  numerics::parallel_chunks(count, kChunk, [&](std::size_t begin, std::size_t end) {
    Matrix& acc = partial[begin / kChunk];
    for (std::size_t i = begin; i < end; ++i) add_sample(i, acc);
  });
  Matrix sum(dim, dim);
  for (const Matrix& part : partial) sum = sum + part;
  return sum.scaled(1.0 / static_cast<double>(count));
}

/// Inverse of a symmetric positive definite matrix through its spectrum.
Matrix sym_inverse(const Matrix& m) {
  const auto eig = numerics::sym_eig(m);
  const std::size_t p = m.rows();
  Matrix out(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    if (eig.eigenvalues[i] <= 1e-12)
      fail(ErrorKind::NotPositiveDefinite,
           "matrix eigenvalue " + std::to_string(eig.eigenvalues[i]) + " is not positive");
  }
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < p; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < p; ++i)
        s += eig.eigenvectors(r, i) * eig.eigenvectors(c, i) / eig.eigenvalues[i];
      out(r, c) = s;
    }
  return out.symmetrized();
}

Vec mean_loglik_gradient(const LikelihoodModel& model, const Vec& theta,
                         const std::vector<Obs>& batch) {
  Vec gbar(model.param_dim(), 0.0);
  for (const Obs& x : batch) {
    const Vec g = model.grad_log_lik(theta, x);
    for (std::size_t j = 0; j < gbar.size(); ++j) gbar[j] += g[j];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& v : gbar) v *= inv;
  return gbar;
}

}  // namespace

// ---------------------------------------------------------------------------
// LikelihoodModel base + built-in families
// ---------------------------------------------------------------------------

bool LikelihoodModel::in_domain(const Vec& theta) const {
  if (theta.size() != param_dim()) return false;
  return vec_finite(theta);
}

void LikelihoodModel::require_param(const Vec& theta) const {
  if (theta.size() != param_dim())
    fail(ErrorKind::DimensionMismatch,
         name() + " expects " + std::to_string(param_dim()) + " parameters, got " +
             std::to_string(theta.size()));
  if (!in_domain(theta))
    fail(ErrorKind::InvalidParameter, name() + " parameter outside the model domain");
}

// -- Bernoulli --------------------------------------------------------------

bool BernoulliModel::in_domain(const Vec& theta) const {
  return theta.size() == 1 && std::isfinite(theta[0]) && theta[0] > 0.0 && theta[0] < 1.0;
}

double BernoulliModel::log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  if (x.size() != 1) fail(ErrorKind::InvalidObservation, "bernoulli observation must be scalar");
  const double y = binary_label(x, 0);
  return y * std::log(theta[0]) + (1.0 - y) * std::log1p(-theta[0]);
}

Vec BernoulliModel::grad_log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  if (x.size() != 1) fail(ErrorKind::InvalidObservation, "bernoulli observation must be scalar");
  const double y = binary_label(x, 0);
  return {y / theta[0] - (1.0 - y) / (1.0 - theta[0])};
}

Matrix BernoulliModel::exact_fisher(const Vec& theta) const {
  require_param(theta);
  return Matrix(1, 1, {1.0 / (theta[0] * (1.0 - theta[0]))});
}

Obs BernoulliModel::sample(const Vec& theta, SeededRng& rng) const {
  require_param(theta);
  return {rng.next_double() < theta[0] ? 1.0 : 0.0};
}

// -- Gaussian mean ----------------------------------------------------------

double GaussianMeanModel::log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  if (x.size() != 1 || !std::isfinite(x[0]))
    fail(ErrorKind::InvalidObservation, "gaussian observation must be one finite real");
  const double d = x[0] - theta[0];
  return -0.5 * d * d - 0.5 * std::log(2.0 * std::numbers::pi_v<double>);
}

Vec GaussianMeanModel::grad_log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  if (x.size() != 1 || !std::isfinite(x[0]))
    fail(ErrorKind::InvalidObservation, "gaussian observation must be one finite real");
  return {x[0] - theta[0]};
}

Matrix GaussianMeanModel::exact_fisher(const Vec& theta) const {
  require_param(theta);
  return Matrix::identity(1);
}

Obs GaussianMeanModel::sample(const Vec& theta, SeededRng& rng) const {
  require_param(theta);
  return {theta[0] + rng.next_gaussian()};
}

// -- Categorical ------------------------------------------------------------

CategoricalModel::CategoricalModel(std::size_t categories) : categories_(categories) {
  if (categories < 2)
    fail(ErrorKind::InvalidDimension, "categorical model needs at least two classes");
}

bool CategoricalModel::in_domain(const Vec& theta) const {
  if (theta.size() != param_dim() || !vec_finite(theta)) return false;
  double sum = 0.0;
  for (double p : theta) {
    if (p <= 0.0) return false;
    sum += p;
  }
  return sum < 1.0;
}

double CategoricalModel::last_prob(const Vec& theta) const {
  double sum = 0.0;
  for (double p : theta) sum += p;
  return 1.0 - sum;
}

std::size_t CategoricalModel::class_of(const Obs& x) const {
  if (x.size() != 1) fail(ErrorKind::InvalidObservation, "categorical observation must be scalar");
  const double raw = x[0];
  if (!std::isfinite(raw))
    fail(ErrorKind::InvalidObservation, "class index must be finite");
  const long long c = std::llround(raw);
  if (std::abs(raw - static_cast<double>(c)) > 1e-9 || c < 0 ||
      c >= static_cast<long long>(categories_))
    fail(ErrorKind::InvalidObservation,
         "class index must be an integer in [0, " + std::to_string(categories_ - 1) + "]");
  return static_cast<std::size_t>(c);
}

double CategoricalModel::log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  const std::size_t c = class_of(x);
  return std::log(c + 1 < categories_ ? theta[c] : last_prob(theta));
}

Vec CategoricalModel::grad_log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  const std::size_t c = class_of(x);
  Vec g(param_dim(), 0.0);
  if (c + 1 < categories_) {
    g[c] = 1.0 / theta[c];
  } else {
    const double inv_last = 1.0 / last_prob(theta);
    for (double& v : g) v = -inv_last;
  }
  return g;
}

Matrix CategoricalModel::exact_fisher(const Vec& theta) const {
  require_param(theta);
  const std::size_t p = param_dim();
  const double inv_last = 1.0 / last_prob(theta);
  Matrix f(p, p);
  for (std::size_t r = 0; r < p; ++r)
    for (std::size_t c = 0; c < p; ++c)
      f(r, c) = inv_last + (r == c ? 1.0 / theta[r] : 0.0);
  return f;
}

Obs CategoricalModel::sample(const Vec& theta, SeededRng& rng) const {
  require_param(theta);
  const double u = rng.next_double();
  double cum = 0.0;
  for (std::size_t c = 0; c + 1 < categories_; ++c) {
    cum += theta[c];
    if (u < cum) return {static_cast<double>(c)};
  }
  return {static_cast<double>(categories_ - 1)};
}

// -- Logistic regression ----------------------------------------------------

LogisticModel::LogisticModel(std::size_t dim, std::size_t pool_size) : dim_(dim) {
  if (dim < 1 || pool_size < 1)
    fail(ErrorKind::InvalidDimension, "logistic model needs dim >= 1 and a nonempty pool");
  // Fixed covariate pool shared by every instance of the same shape, so the
  // model family (and its exact Fisher) is reproducible.
  SeededRng pool_rng(0x5EED);
  pool_.reserve(pool_size);
  for (std::size_t m = 0; m < pool_size; ++m) {
    Vec z(dim);
    for (std::size_t j = 0; j < dim; ++j) z[j] = 2.0 * pool_rng.next_double() - 1.0;
    pool_.push_back(std::move(z));
  }
}

Vec LogisticModel::covariate_of(const Obs& x) const {
  if (x.size() != dim_ + 1)
    fail(ErrorKind::InvalidObservation,
         "logistic observation must hold [label, " + std::to_string(dim_) + " covariates]");
  Vec z(x.begin() + 1, x.end());
  if (!vec_finite(z)) fail(ErrorKind::InvalidObservation, "non-finite covariates");
  return z;
}

double LogisticModel::log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  const Vec z = covariate_of(x);
  const double y = binary_label(x, 0);
  const double s = numerics::dot(theta, z);
  return y * s - softplus(s);
}

Vec LogisticModel::grad_log_lik(const Vec& theta, const Obs& x) const {
  require_param(theta);
  const Vec z = covariate_of(x);
  const double y = binary_label(x, 0);
  const double residual = y - stable_sigmoid(numerics::dot(theta, z));
  Vec g(dim_);
  for (std::size_t j = 0; j < dim_; ++j) g[j] = residual * z[j];
  return g;
}

Matrix LogisticModel::exact_fisher(const Vec& theta) const {
  require_param(theta);
  Matrix f(dim_, dim_);
  for (const Vec& z : pool_) {
    const double sig = stable_sigmoid(numerics::dot(theta, z));
    const double w = sig * (1.0 - sig);
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = 0; c < dim_; ++c) f(r, c) += w * z[r] * z[c];
  }
  return f.scaled(1.0 / static_cast<double>(pool_.size()));
}

Obs LogisticModel::sample(const Vec& theta, SeededRng& rng) const {
  require_param(theta);
  const Vec& z = pool_[rng.next_index(pool_.size())];
  const double sig = stable_sigmoid(numerics::dot(theta, z));
  Obs x(dim_ + 1);
  x[0] = rng.next_double() < sig ? 1.0 : 0.0;
  std::copy(z.begin(), z.end(), x.begin() + 1);
  return x;
}

// -- Factory and self-checks -------------------------------------------------

std::unique_ptr<LikelihoodModel> make_model(const std::string& name) {
  std::unique_ptr<LikelihoodModel> model;
  if (name == "bernoulli") model = std::make_unique<BernoulliModel>();
  else if (name == "gauss-mean") model = std::make_unique<GaussianMeanModel>();
  else if (name == "categorical") model = std::make_unique<CategoricalModel>();
  else if (name == "logistic") model = std::make_unique<LogisticModel>();
  else fail(ErrorKind::UnsupportedModel, "unknown model family '" + name + "'");
  validate_model(*model, default_theta_star(*model));
  return model;
}

void validate_model(const LikelihoodModel& model, const Vec& theta_ref) {
  model.require_param(theta_ref);
  SeededRng rng(0xF15E);

  // Analytic score against central differences of the log-likelihood at a few
  // jittered parameter points and sampled observations.
  for (std::size_t trial = 0; trial < 3; ++trial) {
    Vec theta = theta_ref;
    if (trial > 0) {
      for (double& v : theta) v += 0.02 * (rng.next_double() - 0.5);
      if (!model.in_domain(theta)) theta = theta_ref;
    }
    const Obs x = model.sample(theta, rng);
    const Vec g = model.grad_log_lik(theta, x);
    const Vec fd = numerics::finite_diff_gradient(
        [&](const Vec& probe) { return model.log_lik(probe, x); }, theta, 1e-6);
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!(std::abs(g[j] - fd[j]) < 1e-6))
        fail(ErrorKind::SelfCheckFailed,
             model.name() + ": analytic score deviates from finite differences by " +
                 std::to_string(std::abs(g[j] - fd[j])));
  }

  if (model.has_exact_fisher()) {
    const Matrix f = model.exact_fisher(theta_ref);
    if (!f.is_symmetric(1e-10))
      fail(ErrorKind::SelfCheckFailed, model.name() + ": Fisher matrix is not symmetric");
    const auto eig = numerics::sym_eig(f);
    if (eig.eigenvalues.front() < -1e-10)
      fail(ErrorKind::SelfCheckFailed,
           model.name() + ": Fisher matrix has negative eigenvalue " +
               std::to_string(eig.eigenvalues.front()));
  }
}

Vec default_theta_star(const LikelihoodModel& model) {
  const std::string n = model.name();
  if (n == "bernoulli") return {0.5};
  if (n == "gauss-mean") return {0.0};
  if (n == "categorical") {
    const std::size_t p = model.param_dim();
    return Vec(p, 1.0 / static_cast<double>(p + 1));
  }
  if (n == "logistic") {
    static const double pattern[3] = {0.8, -0.5, 0.3};
    Vec theta(model.param_dim());
    for (std::size_t j = 0; j < theta.size(); ++j) theta[j] = pattern[j % 3];
    return theta;
  }
  fail(ErrorKind::UnsupportedModel, "no default parameter for model '" + n + "'");
}

// ---------------------------------------------------------------------------
// Optimizer steps
// ---------------------------------------------------------------------------

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "flow") return Algorithm::FisherFlow;
  if (name == "rmsprop") return Algorithm::Rmsprop;
  if (name == "adam") return Algorithm::Adam;
  if (name == "sgd") return Algorithm::Sgd;
  fail(ErrorKind::UnsupportedModel, "unknown algorithm '" + name + "'");
}

std::string to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::FisherFlow: return "flow";
    case Algorithm::Rmsprop: return "rmsprop";
    case Algorithm::Adam: return "adam";
    case Algorithm::Sgd: return "sgd";
  }
  return "unknown";
}

OptimizerState make_state(Algorithm algo, Vec theta0, OptimizerHyper hyper) {
  OptimizerState state;
  state.algorithm = algo;
  state.m.assign(theta0.size(), 0.0);
  state.v.assign(theta0.size(), 0.0);
  state.theta = std::move(theta0);
  state.hyper = hyper;
  return state;
}

namespace {

void require_step_input(const OptimizerState& state, const Vec& g) {
  if (g.size() != state.theta.size())
    fail(ErrorKind::DimensionMismatch, "gradient dimension does not match the parameters");
  if (!vec_finite(g)) fail(ErrorKind::NonFiniteGradient, "non-finite gradient entry");
}

}  // namespace

OptimizerState rmsprop_step(OptimizerState state, const Vec& g) {
  require_step_input(state, g);
  state.t += 1;
  const auto& h = state.hyper;
  for (std::size_t j = 0; j < g.size(); ++j) {
    state.v[j] = h.beta2 * state.v[j] + (1.0 - h.beta2) * g[j] * g[j];
    state.theta[j] -= h.alpha * g[j] / (std::sqrt(state.v[j]) + h.eps);
  }
  return state;
}

OptimizerState adam_step(OptimizerState state, const Vec& g) {
  require_step_input(state, g);
  state.t += 1;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t j = 0; j < g.size(); ++j) {
    state.m[j] = h.beta1 * state.m[j] + (1.0 - h.beta1) * g[j];
    state.v[j] = h.beta2 * state.v[j] + (1.0 - h.beta2) * g[j] * g[j];
    const double m_hat = state.m[j] / bc1;
    const double v_hat = state.v[j] / bc2;
    state.theta[j] -= h.alpha * m_hat / (std::sqrt(v_hat) + h.eps);
  }
  return state;
}

OptimizerState sgd_step(OptimizerState state, const Vec& g) {
  require_step_input(state, g);
  state.t += 1;
  for (std::size_t j = 0; j < g.size(); ++j) state.theta[j] -= state.hyper.alpha * g[j];
  return state;
}

OptimizerState fisher_flow_update(const LikelihoodModel& model, OptimizerState state,
                                  const Vec& mean_grad) {
  require_step_input(state, mean_grad);
  const Matrix precond = numerics::spd_inverse_sqrt(model.exact_fisher(state.theta),
                                                    state.hyper.ridge);
  const Vec direction = precond * mean_grad;
  state.t += 1;
  for (std::size_t j = 0; j < direction.size(); ++j)
    state.theta[j] += state.hyper.alpha * direction[j];
  return state;
}

OptimizerState fisher_flow_step(const LikelihoodModel& model, OptimizerState state,
                                const std::vector<Obs>& batch) {
  if (batch.empty()) fail(ErrorKind::InsufficientData, "flow step needs a nonempty batch");
  const Vec gbar = mean_loglik_gradient(model, state.theta, batch);
  return fisher_flow_update(model, std::move(state), gbar);
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

FitResult optimize(const LikelihoodModel& model, Algorithm algo, const Vec& theta0,
                   const std::vector<Obs>& data, const Schedule& schedule) {
  if (data.empty()) fail(ErrorKind::InsufficientData, "optimize needs at least one observation");
  if (theta0.size() != model.param_dim())
    fail(ErrorKind::DimensionMismatch, "starting point has the wrong dimension");

  OptimizerHyper hyper;
  hyper.alpha = schedule.alpha;
  hyper.beta1 = schedule.beta1;
  hyper.beta2 = schedule.beta2;
  hyper.eps = schedule.eps;
  hyper.ridge = schedule.ridge;
  OptimizerState state = make_state(algo, theta0, hyper);

  const double inv_n = 1.0 / static_cast<double>(data.size());
  double alpha_step = schedule.alpha;
  FitResult out;

  for (std::size_t step = 0;; ++step) {
    if (!model.in_domain(state.theta))
      fail(ErrorKind::Diverged,
           "parameters left the model domain at step " + std::to_string(step));

    double mean_ll = 0.0;
    Vec gbar(state.theta.size(), 0.0);
    for (const Obs& x : data) {
      mean_ll += model.log_lik(state.theta, x);
      const Vec g = model.grad_log_lik(state.theta, x);
      for (std::size_t j = 0; j < gbar.size(); ++j) gbar[j] += g[j];
    }
    mean_ll *= inv_n;
    for (double& v : gbar) v *= inv_n;

    const double loss = -mean_ll;
    if (!std::isfinite(loss) || !vec_finite(gbar))
      fail(ErrorKind::Diverged, "non-finite loss at step " + std::to_string(step));

    const double grad_inf = numerics::norm_inf(gbar);
    if (schedule.record_trace)
      out.trace.push_back({static_cast<std::uint64_t>(step), loss, grad_inf, state.theta});
    out.theta_hat = state.theta;
    out.grad_inf_norm = grad_inf;
    out.final_loss = loss;
    out.steps = step;
    if (grad_inf < schedule.grad_tol) {
      out.converged = true;
      break;
    }
    if (step == schedule.max_steps) break;

    state.hyper.alpha = alpha_step;
    switch (algo) {
      case Algorithm::FisherFlow:
        state = fisher_flow_update(model, std::move(state), gbar);
        break;
      case Algorithm::Rmsprop:
      case Algorithm::Adam:
      case Algorithm::Sgd: {
        Vec loss_grad(gbar.size());
        for (std::size_t j = 0; j < gbar.size(); ++j) loss_grad[j] = -gbar[j];
        if (algo == Algorithm::Rmsprop) state = rmsprop_step(std::move(state), loss_grad);
        else if (algo == Algorithm::Adam) state = adam_step(std::move(state), loss_grad);
        else state = sgd_step(std::move(state), loss_grad);
        break;
      }
    }
    alpha_step *= schedule.decay;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Information-matrix estimators
// ---------------------------------------------------------------------------

Matrix fisher_outer(const LikelihoodModel& model, const Vec& theta, std::size_t samples,
                    SeededRng& rng) {
  model.require_param(theta);
  if (samples < 1) fail(ErrorKind::InvalidDimension, "fisher_outer needs samples >= 1");
  const std::size_t p = model.param_dim();
  const SeededRng base = rng;
  Matrix mean = chunked_matrix_mean(samples, p, [&](std::size_t i, Matrix& acc) {
    SeededRng local = base.substream(i);
    const Obs x = model.sample(theta, local);
    const Vec g = model.grad_log_lik(theta, x);
    if (!vec_finite(g)) fail(ErrorKind::NonFiniteGradient, "non-finite score draw");
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c) acc(r, c) += g[r] * g[c];
  });
  return mean.symmetrized();
}

Matrix fisher_hessian(const LikelihoodModel& model, const Vec& theta, std::size_t samples,
                      SeededRng& rng) {
  model.require_param(theta);
  if (samples < 1) fail(ErrorKind::InvalidDimension, "fisher_hessian needs samples >= 1");
  const std::size_t p = model.param_dim();
  const SeededRng base = rng;
  Matrix mean = chunked_matrix_mean(samples, p, [&](std::size_t i, Matrix& acc) {
    SeededRng local = base.substream(i);
    const Obs x = model.sample(theta, local);
    const Matrix hess = numerics::finite_diff_jacobian(
        [&](const Vec& probe) { return model.grad_log_lik(probe, x); }, theta, 1e-5);
    if (!hess.all_finite()) fail(ErrorKind::NonFiniteGradient, "non-finite Hessian draw");
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c) acc(r, c) -= hess(r, c);
  });
  return mean.symmetrized();
}

// ---------------------------------------------------------------------------
// Statistical studies
// ---------------------------------------------------------------------------

namespace {

Schedule default_study_schedule(Algorithm algo) {
  Schedule sched;
  sched.grad_tol = 1e-8;
  if (algo == Algorithm::FisherFlow || algo == Algorithm::Sgd) {
    sched.alpha = 0.3;
    sched.max_steps = 20000;
  } else {
    // Stochastic preconditioners need a shrinking step to park inside the
    // gradient tolerance.
    sched.alpha = 0.02;
    sched.decay = 0.999;
    sched.max_steps = 40000;
  }
  return sched;
}

}  // namespace

MleReport cramer_rao_study(const LikelihoodModel& model, const Vec& theta_star,
                           std::size_t n_per_replicate, std::size_t replicates,
                           SeededRng& rng, const std::optional<Schedule>& schedule,
                           Algorithm algo) {
  model.require_param(theta_star);
  if (replicates < 100)
    fail(ErrorKind::UnreliableStudy,
         "need at least 100 replicates, got " + std::to_string(replicates));
  if (n_per_replicate < 1) fail(ErrorKind::InvalidDimension, "replicate size must be >= 1");

  const std::size_t p = model.param_dim();
  const Schedule sched = schedule ? *schedule : default_study_schedule(algo);
  const SeededRng base = rng;

  std::vector<Vec> fitted(replicates);
  std::vector<char> ok(replicates, 0);
  std::vector<double> grad_norms(replicates, 0.0);
  numerics::parallel_chunks(replicates, 64, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      SeededRng sub = base.substream(i);
      std::vector<Obs> data;
      data.reserve(n_per_replicate);
      for (std::size_t k = 0; k < n_per_replicate; ++k) data.push_back(model.sample(theta_star, sub));
      try {
        const FitResult fit = optimize(model, algo, theta_star, data, sched);
        if (fit.converged) {
          fitted[i] = fit.theta_hat;
          grad_norms[i] = fit.grad_inf_norm;
          ok[i] = 1;
        }
      } catch (const LabError&) {
        // counted below as a failed replicate
      }
    }
  });

  MleReport report;
  report.theta_star = theta_star;
  report.n_per_replicate = n_per_replicate;
  report.replicates = replicates;
  for (std::size_t i = 0; i < replicates; ++i)
    if (!ok[i]) ++report.failures;
  if (100 * report.failures > replicates)
    fail(ErrorKind::UnreliableStudy,
         std::to_string(report.failures) + " of " + std::to_string(replicates) +
             " replicates failed to fit");

  const std::size_t good = replicates - report.failures;
  report.estimates = Matrix(good, p);
  std::size_t row = 0;
  for (std::size_t i = 0; i < replicates; ++i) {
    if (!ok[i]) continue;
    for (std::size_t j = 0; j < p; ++j) report.estimates(row, j) = fitted[i][j];
    report.max_grad_inf_norm = std::max(report.max_grad_inf_norm, grad_norms[i]);
    ++row;
  }

  report.mean_estimate.assign(p, 0.0);
  for (std::size_t i = 0; i < good; ++i)
    for (std::size_t j = 0; j < p; ++j) report.mean_estimate[j] += report.estimates(i, j);
  for (double& v : report.mean_estimate) v /= static_cast<double>(good);

  Matrix cov(p, p);
  for (std::size_t i = 0; i < good; ++i)
    for (std::size_t r = 0; r < p; ++r) {
      const double dr = report.estimates(i, r) - report.mean_estimate[r];
      for (std::size_t c = 0; c < p; ++c)
        cov(r, c) += dr * (report.estimates(i, c) - report.mean_estimate[c]);
    }
  report.empirical_covariance = cov.scaled(1.0 / static_cast<double>(good - 1)).symmetrized();

  const double n = static_cast<double>(n_per_replicate);
  const Matrix fisher_inv = sym_inverse(model.exact_fisher(theta_star));
  report.crlb_reference = fisher_inv.scaled(1.0 / n);

  const Matrix scaled_cov = report.empirical_covariance.scaled(n);
  const Matrix gap = (scaled_cov - fisher_inv).symmetrized();
  report.min_eig_gap = numerics::sym_eig(gap).eigenvalues.front();
  // Wishart-style dispersion of a covariance estimate from R samples: entry
  // variances scale like 2/(R-1) times the squared entries.
  report.slack_delta =
      3.0 * scaled_cov.frobenius_norm() * std::sqrt(2.0 / static_cast<double>(good - 1));
  report.bound_satisfied = report.min_eig_gap >= -report.slack_delta;
  return report;
}

DiagonalConsistencyReport diagonal_fisher_consistency(const LikelihoodModel& model,
                                                      const Vec& theta_hat,
                                                      std::size_t samples, SeededRng& rng,
                                                      double beta2) {
  if (!model.has_exact_fisher())
    fail(ErrorKind::UnsupportedModel, "model lacks an exact Fisher reference");
  model.require_param(theta_hat);
  if (samples < 1) fail(ErrorKind::InvalidDimension, "need at least one gradient sample");
  if (!(beta2 > 0.0 && beta2 < 1.0))
    fail(ErrorKind::InvalidParameter, "beta2 must lie in (0, 1)");

  const std::size_t p = model.param_dim();
  Vec v(p, 0.0);
  for (std::size_t i = 0; i < samples; ++i) {
    SeededRng sub = rng.substream(i);
    const Obs x = model.sample(theta_hat, sub);
    const Vec g = model.grad_log_lik(theta_hat, x);
    if (!vec_finite(g)) fail(ErrorKind::NonFiniteGradient, "non-finite score draw");
    for (std::size_t j = 0; j < p; ++j)
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
  }
  const double correction = 1.0 - std::pow(beta2, static_cast<double>(samples));

  DiagonalConsistencyReport report;
  report.v_accumulated.resize(p);
  for (std::size_t j = 0; j < p; ++j) report.v_accumulated[j] = v[j] / correction;

  const Matrix fisher = model.exact_fisher(theta_hat);
  report.fisher_diagonal.resize(p);
  for (std::size_t j = 0; j < p; ++j) report.fisher_diagonal[j] = fisher(j, j);

  for (std::size_t j = 0; j < p; ++j) {
    if (report.fisher_diagonal[j] < 1e-12) {
      report.degenerate = true;
      continue;
    }
    const double rel =
        std::abs(report.v_accumulated[j] - report.fisher_diagonal[j]) / report.fisher_diagonal[j];
    report.max_relative_deviation = std::max(report.max_relative_deviation, rel);
  }
  return report;
}

}  // namespace lab::fisher
