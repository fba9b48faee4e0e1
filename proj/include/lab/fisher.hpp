#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lab/matrix.hpp"
#include "lab/rng.hpp"

namespace lab::fisher {

using numerics::Matrix;
using numerics::SeededRng;
using numerics::Vec;

/// One observation.  The layout is model specific: scalar models use a single
/// entry, logistic regression packs [label, covariate...].
using Obs = std::vector<double>;

// ---------------------------------------------------------------------------
// Likelihood models
// ---------------------------------------------------------------------------

/// A parametric family with analytic score and Fisher information plus a
/// sampler, sufficient for both the estimation experiments and the
/// preconditioned optimizers.
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t param_dim() const = 0;

  /// Whether theta is a usable parameter value.  Defaults to "all finite".
  virtual bool in_domain(const Vec& theta) const;

  virtual double log_lik(const Vec& theta, const Obs& x) const = 0;
  virtual Vec grad_log_lik(const Vec& theta, const Obs& x) const = 0;

  virtual bool has_exact_fisher() const { return true; }
  virtual Matrix exact_fisher(const Vec& theta) const = 0;

  virtual Obs sample(const Vec& theta, SeededRng& rng) const = 0;

  /// Throws unless theta has the right dimension and lies in the domain.
  void require_param(const Vec& theta) const;
};

/// Coin flip with success probability theta in (0, 1).  Observation: {0, 1}.
class BernoulliModel final : public LikelihoodModel {
 public:
  std::string name() const override { return "bernoulli"; }
  std::size_t param_dim() const override { return 1; }
  bool in_domain(const Vec& theta) const override;
  double log_lik(const Vec& theta, const Obs& x) const override;
  Vec grad_log_lik(const Vec& theta, const Obs& x) const override;
  Matrix exact_fisher(const Vec& theta) const override;
  Obs sample(const Vec& theta, SeededRng& rng) const override;
};

/// Normal with unknown mean and unit variance.  Observation: one real.
class GaussianMeanModel final : public LikelihoodModel {
 public:
  std::string name() const override { return "gauss-mean"; }
  std::size_t param_dim() const override { return 1; }
  double log_lik(const Vec& theta, const Obs& x) const override;
  Vec grad_log_lik(const Vec& theta, const Obs& x) const override;
  Matrix exact_fisher(const Vec& theta) const override;
  Obs sample(const Vec& theta, SeededRng& rng) const override;
};

/// Categorical distribution over `categories` classes.  The free parameters
/// are the first categories-1 probabilities; the last probability is the
/// complement.  Observation: the class index as a real number.
class CategoricalModel final : public LikelihoodModel {
 public:
  explicit CategoricalModel(std::size_t categories = 3);
  std::string name() const override { return "categorical"; }
  std::size_t param_dim() const override { return categories_ - 1; }
  std::size_t categories() const { return categories_; }
  bool in_domain(const Vec& theta) const override;
  double log_lik(const Vec& theta, const Obs& x) const override;
  Vec grad_log_lik(const Vec& theta, const Obs& x) const override;
  Matrix exact_fisher(const Vec& theta) const override;
  Obs sample(const Vec& theta, SeededRng& rng) const override;

 private:
  std::size_t categories_;
  std::size_t class_of(const Obs& x) const;
  double last_prob(const Vec& theta) const;
};

/// Binary logistic regression with a fixed finite pool of covariate vectors.
/// Each draw picks a pool entry uniformly and flips a label with probability
/// sigmoid(theta . z); the exact Fisher averages sigma(1-sigma) z z^T over the
/// pool.  Observation: [label, z_0, ..., z_{d-1}].
class LogisticModel final : public LikelihoodModel {
 public:
  explicit LogisticModel(std::size_t dim = 3, std::size_t pool_size = 8);
  std::string name() const override { return "logistic"; }
  std::size_t param_dim() const override { return dim_; }
  const std::vector<Vec>& covariate_pool() const { return pool_; }
  double log_lik(const Vec& theta, const Obs& x) const override;
  Vec grad_log_lik(const Vec& theta, const Obs& x) const override;
  Matrix exact_fisher(const Vec& theta) const override;
  Obs sample(const Vec& theta, SeededRng& rng) const override;

 private:
  std::size_t dim_;
  std::vector<Vec> pool_;
  Vec covariate_of(const Obs& x) const;
};

/// Factory over the built-in family names ("bernoulli", "gauss-mean",
/// "categorical", "logistic").  The returned model has been cross-checked:
/// analytic score against finite differences, Fisher for symmetry and
/// positive semidefiniteness.
std::unique_ptr<LikelihoodModel> make_model(const std::string& name);

/// The cross-checks run by make_model, callable on any model at a reference
/// parameter.  Throws SelfCheckFailed on disagreement.
void validate_model(const LikelihoodModel& model, const Vec& theta_ref);

/// A reasonable true parameter for each built-in family (used by the CLI and
/// the studies when the caller does not supply one).
Vec default_theta_star(const LikelihoodModel& model);

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class Algorithm { FisherFlow, Rmsprop, Adam, Sgd };

Algorithm algorithm_from_string(const std::string& name);
std::string to_string(Algorithm algo);

struct OptimizerHyper {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ridge = 1e-8;  // added to the Fisher before the inverse square root
};

/// Value-semantics optimizer state; each *_step call returns the advanced
/// state with t incremented by exactly one.
struct OptimizerState {
  Algorithm algorithm = Algorithm::Adam;
  Vec theta;
  std::uint64_t t = 0;
  Vec m;  // first moment (adam)
  Vec v;  // second moment (adam, rmsprop); entrywise nonnegative
  OptimizerHyper hyper;
};

OptimizerState make_state(Algorithm algo, Vec theta0, OptimizerHyper hyper = {});

/// RMSprop on a loss gradient: v <- beta2 v + (1-beta2) g*g first, then
/// theta <- theta - alpha g / (sqrt(v) + eps), all elementwise.
OptimizerState rmsprop_step(OptimizerState state, const Vec& g);

/// Adam on a loss gradient with bias correction; t counts from 1.
OptimizerState adam_step(OptimizerState state, const Vec& g);

/// Plain gradient descent on a loss gradient.
OptimizerState sgd_step(OptimizerState state, const Vec& g);

/// Fisher-preconditioned ascent: theta += alpha * F(theta)^{-1/2} gbar where
/// gbar is the batch-mean log-likelihood gradient.
OptimizerState fisher_flow_step(const LikelihoodModel& model, OptimizerState state,
                                const std::vector<Obs>& batch);

/// Same update with the mean gradient already in hand.
OptimizerState fisher_flow_update(const LikelihoodModel& model, OptimizerState state,
                                  const Vec& mean_grad);

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

struct TraceRow {
  std::uint64_t step = 0;
  double loss = 0.0;           // mean negative log-likelihood
  double grad_inf_norm = 0.0;  // of the mean log-likelihood gradient
  Vec theta;
};

struct Schedule {
  double alpha = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double ridge = 1e-8;
  /// Per-step multiplier applied to alpha (1 keeps the step size constant).
  /// The stochastic preconditioners hold a limit cycle of amplitude
  /// proportional to alpha under a constant step, so tight gradient
  /// tolerances need decay < 1.
  double decay = 1.0;
  std::size_t max_steps = 10000;
  double grad_tol = 1e-8;
  bool record_trace = false;
};

struct FitResult {
  Vec theta_hat;
  double grad_inf_norm = 0.0;
  double final_loss = 0.0;
  std::size_t steps = 0;
  bool converged = false;
  std::vector<TraceRow> trace;  // filled when schedule.record_trace
};

/// Iterates the chosen algorithm on the mean negative log-likelihood of
/// `data` until the mean-gradient infinity norm drops below grad_tol or
/// max_steps updates have run.  Throws Diverged (with the step index in the
/// message) if the loss turns non-finite or theta leaves the model domain.
FitResult optimize(const LikelihoodModel& model, Algorithm algo, const Vec& theta0,
                   const std::vector<Obs>& data, const Schedule& schedule);

// ---------------------------------------------------------------------------
// Information-matrix estimators
// ---------------------------------------------------------------------------

/// Monte-Carlo mean of the score outer product g g^T over draws from the
/// model at theta.
Matrix fisher_outer(const LikelihoodModel& model, const Vec& theta,
                    std::size_t samples, SeededRng& rng);

/// Monte-Carlo mean of -(Hessian of the log-likelihood), the Hessian taken by
/// central differences of the analytic score.
Matrix fisher_hessian(const LikelihoodModel& model, const Vec& theta,
                      std::size_t samples, SeededRng& rng);

// ---------------------------------------------------------------------------
// Statistical studies
// ---------------------------------------------------------------------------

/// Replicated maximum-likelihood experiment against the variance lower bound.
struct MleReport {
  Vec theta_star;
  std::size_t n_per_replicate = 0;
  std::size_t replicates = 0;
  Matrix estimates;             // replicates x P, one fitted theta per row
  Vec mean_estimate;
  double max_grad_inf_norm = 0.0;  // worst final gradient across replicates
  Matrix empirical_covariance;  // P x P, symmetric PSD
  Matrix crlb_reference;        // F(theta_star)^{-1} / n
  double min_eig_gap = 0.0;     // smallest eigenvalue of n Cov - F^{-1}
  double slack_delta = 0.0;     // three MC standard errors of n Cov
  bool bound_satisfied = false; // min_eig_gap >= -slack_delta
  std::size_t failures = 0;
};

/// Draws `replicates` datasets of size n from theta_star, fits each with the
/// given algorithm (Fisher flow by default, started at theta_star), and
/// compares the scaled estimator covariance with the inverse Fisher matrix.
/// Fewer than 100 replicates, or optimizer failure on more than 1% of them,
/// throws UnreliableStudy.
MleReport cramer_rao_study(const LikelihoodModel& model, const Vec& theta_star,
                           std::size_t n_per_replicate, std::size_t replicates,
                           SeededRng& rng,
                           const std::optional<Schedule>& schedule = std::nullopt,
                           Algorithm algo = Algorithm::FisherFlow);

/// How well the optimizers' diagonal second-moment accumulator tracks the
/// true Fisher diagonal at a stationary point.
struct DiagonalConsistencyReport {
  Vec v_accumulated;   // bias-corrected EMA of squared per-sample scores
  Vec fisher_diagonal;
  double max_relative_deviation = 0.0;  // over non-degenerate coordinates
  bool degenerate = false;  // some Fisher diagonal entry is (near) zero
};

/// Runs the RMSprop/Adam v-recursion over per-sample scores drawn at
/// theta_hat and reports the deviation from diag(exact Fisher).  Models
/// without an exact Fisher throw UnsupportedModel.
DiagonalConsistencyReport diagonal_fisher_consistency(const LikelihoodModel& model,
                                                      const Vec& theta_hat,
                                                      std::size_t samples,
                                                      SeededRng& rng,
                                                      double beta2 = 0.999);

}  // namespace lab::fisher
