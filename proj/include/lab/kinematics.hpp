#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "lab/matrix.hpp"
#include "lab/rng.hpp"

namespace lab::kinematics {

using numerics::Matrix;
using numerics::SeededRng;
using numerics::Vec;

using Symbol = std::uint32_t;

/// Finite-alphabet token sequence.  Symbols must lie below alphabet_size and
/// the stream must be nonempty.
struct TokenStream {
  std::vector<Symbol> symbols;
  Symbol alphabet_size = 0;

  TokenStream(std::vector<Symbol> symbols, Symbol alphabet_size);
};

/// One-step-ahead conditional law over a finite alphabet.  Implementations
/// must return probabilities that sum to one over the alphabet for any prefix;
/// a zero probability on a queried symbol is reported by the surprisal
/// operations, not here.
class PredictiveModel {
 public:
  virtual ~PredictiveModel() = default;
  virtual Symbol alphabet_size() const = 0;
  virtual double cond_prob(std::span<const Symbol> prefix, Symbol next) const = 0;
};

/// Fixed marginal, independent of the prefix.
class FixedIidModel final : public PredictiveModel {
 public:
  explicit FixedIidModel(Vec probabilities);
  Symbol alphabet_size() const override { return static_cast<Symbol>(probs_.size()); }
  double cond_prob(std::span<const Symbol> prefix, Symbol next) const override;

 private:
  Vec probs_;
};

/// First-order Markov chain used both as a sampling source and, through the
/// PredictiveModel interface, as the matching conditional law.
class MarkovSource final : public PredictiveModel {
 public:
  MarkovSource(Matrix transition, Vec initial);
  static MarkovSource iid(const Vec& probabilities);

  Symbol alphabet_size() const override { return static_cast<Symbol>(initial_.size()); }
  double cond_prob(std::span<const Symbol> prefix, Symbol next) const override;

  TokenStream sample(std::size_t length, SeededRng& rng) const;
  Vec stationary() const;  // fixed point of the transition by power iteration

  const Matrix& transition() const { return transition_; }
  const Vec& initial() const { return initial_; }

 private:
  Matrix transition_;
  Vec initial_;
};

/// Add-lambda smoothed n-gram model; the context is the last (order - 1)
/// symbols, or the whole prefix when it is shorter.
class NgramModel final : public PredictiveModel {
 public:
  NgramModel(Symbol alphabet_size, std::size_t order, double smoothing);

  Symbol alphabet_size() const override { return alphabet_size_; }
  double cond_prob(std::span<const Symbol> prefix, Symbol next) const override;
  std::size_t order() const { return order_; }

 private:
  friend NgramModel fit_ngram(const TokenStream&, std::size_t, double);
  struct ContextCounts {
    std::unordered_map<Symbol, std::uint64_t> per_symbol;
    std::uint64_t total = 0;
  };
  struct VecHash {
    std::size_t operator()(const std::vector<Symbol>& key) const noexcept;
  };

  Symbol alphabet_size_;
  std::size_t order_;
  double smoothing_;
  std::unordered_map<std::vector<Symbol>, ContextCounts, VecHash> counts_;
};

/// Add-prior sequential predictor (Laplace rule for prior = 1):
/// p(s | prefix) = (count(s) + prior) / (len(prefix) + prior * K).
class BayesPredictor final : public PredictiveModel {
 public:
  BayesPredictor(Symbol alphabet_size, double prior);
  Symbol alphabet_size() const override { return alphabet_size_; }
  double cond_prob(std::span<const Symbol> prefix, Symbol next) const override;

 private:
  Symbol alphabet_size_;
  double prior_;
};

/// Per-token surprisal -ln p(x_t | x_<t), one value per stream position; the
/// first position conditions on the empty prefix.
std::vector<double> velocity(const PredictiveModel& model, const TokenStream& stream);

/// First differences a[t] = v[t+1] - v[t]; needs at least two velocities.
std::vector<double> acceleration(std::span<const double> v);

/// Total surprisal -ln p(x_1..x_T) evaluated through the probability product
/// (extended precision), not by summing velocities; the two routes agree to
/// 1e-12 and tests rely on that as a cross-check.
double distance(const PredictiveModel& model, const TokenStream& stream);

struct KinematicsSeries {
  std::vector<double> velocity;
  std::vector<double> acceleration;  // one shorter than velocity
  std::vector<double> distance;      // running sum of velocity, same order
};

KinematicsSeries kinematics_series(const PredictiveModel& model, const TokenStream& stream);

/// Curve t -> E[v(t)] of a model against a generating law, t = 1..horizon.
/// With no sample count the expectation is exact by enumerating every prefix
/// (budget K^horizon <= 10^7); with a sample count it is a Monte-Carlo mean
/// over streams drawn from the law, replicate i on rng substream i.
std::vector<double> expected_velocity_curve(const PredictiveModel& law,
                                            const PredictiveModel& model, std::size_t horizon,
                                            std::optional<std::size_t> mc_samples = {},
                                            SeededRng* rng = nullptr);

NgramModel fit_ngram(const TokenStream& corpus, std::size_t order, double smoothing);
BayesPredictor bayes_predictor(Symbol alphabet_size, double prior);

/// Draw a stream of the given length from any conditional law.
TokenStream sample_stream(const PredictiveModel& law, std::size_t length, SeededRng& rng);

}  // namespace lab::kinematics
