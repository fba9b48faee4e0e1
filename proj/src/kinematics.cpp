#include "lab/kinematics.hpp"

#include <cmath>
#include <string>

#include "lab/errors.hpp"

namespace lab::kinematics {

namespace {

double checked_prob(const PredictiveModel& model, std::span<const Symbol> prefix, Symbol next) {
  const double p = model.cond_prob(prefix, next);
  if (!(p > 0.0))
    fail(ErrorKind::ZeroProbability,
         "model assigned probability " + numerics::format_real(p) + " to an observed symbol");
  if (p > 1.0 + 1e-12)
    fail(ErrorKind::ZeroProbability, "model returned a probability above one");
  return p;
}

}  // namespace

TokenStream::TokenStream(std::vector<Symbol> symbols_in, Symbol alphabet_size_in)
    : symbols(std::move(symbols_in)), alphabet_size(alphabet_size_in) {
  if (alphabet_size == 0) fail(ErrorKind::InvalidDimension, "alphabet must be nonempty");
  if (symbols.empty()) fail(ErrorKind::InsufficientData, "token stream must be nonempty");
  for (Symbol s : symbols)
    if (s >= alphabet_size)
      fail(ErrorKind::InvalidDimension,
           "symbol " + std::to_string(s) + " outside alphabet of size " + std::to_string(alphabet_size));
}

FixedIidModel::FixedIidModel(Vec probabilities) : probs_(std::move(probabilities)) {
  if (probs_.empty()) fail(ErrorKind::InvalidDimension, "need at least one symbol");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p))
      fail(ErrorKind::ZeroProbability, "marginal probabilities must be finite and nonnegative");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-12)
    fail(ErrorKind::ZeroProbability, "marginal probabilities must sum to one");
}

double FixedIidModel::cond_prob(std::span<const Symbol>, Symbol next) const {
  if (next >= probs_.size()) fail(ErrorKind::InvalidDimension, "symbol outside alphabet");
  return probs_[next];
}

MarkovSource::MarkovSource(Matrix transition, Vec initial)
    : transition_(std::move(transition)), initial_(std::move(initial)) {
  const std::size_t k = initial_.size();
  if (k == 0) fail(ErrorKind::InvalidDimension, "need at least one symbol");
  if (transition_.rows() != k || transition_.cols() != k)
    fail(ErrorKind::DimensionMismatch, "transition matrix must be K x K");
  double init_sum = 0.0;
  for (double p : initial_) {
    if (!(p >= 0.0)) fail(ErrorKind::ZeroProbability, "initial distribution entries must be >= 0");
    init_sum += p;
  }
  if (std::fabs(init_sum - 1.0) > 1e-12)
    fail(ErrorKind::ZeroProbability, "initial distribution must sum to one");
  for (std::size_t r = 0; r < k; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (!(transition_(r, c) >= 0.0))
        fail(ErrorKind::ZeroProbability, "transition entries must be >= 0");
      row_sum += transition_(r, c);
    }
    if (std::fabs(row_sum - 1.0) > 1e-12)
      fail(ErrorKind::ZeroProbability, "transition row " + std::to_string(r) + " must sum to one");
  }
}

MarkovSource MarkovSource::iid(const Vec& probabilities) {
  const std::size_t k = probabilities.size();
  Matrix t(k, k);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) t(r, c) = probabilities[c];
  return MarkovSource(std::move(t), probabilities);
}

double MarkovSource::cond_prob(std::span<const Symbol> prefix, Symbol next) const {
  if (next >= alphabet_size()) fail(ErrorKind::InvalidDimension, "symbol outside alphabet");
  if (prefix.empty()) return initial_[next];
  return transition_(prefix.back(), next);
}

TokenStream MarkovSource::sample(std::size_t length, SeededRng& rng) const {
  if (length == 0) fail(ErrorKind::InsufficientData, "cannot sample an empty stream");
  std::vector<Symbol> out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double u = rng.next_double();
    double cum = 0.0;
    Symbol chosen = alphabet_size() - 1;
    for (Symbol s = 0; s < alphabet_size(); ++s) {
      cum += t == 0 ? initial_[s] : transition_(out.back(), s);
      if (u < cum) {
        chosen = s;
        break;
      }
    }
    out.push_back(chosen);
  }
  return TokenStream(std::move(out), alphabet_size());
}

Vec MarkovSource::stationary() const {
  Vec pi = initial_;
  const std::size_t k = pi.size();
  for (int iter = 0; iter < 100000; ++iter) {
    Vec next(k, 0.0);
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t t = 0; t < k; ++t) next[t] += pi[s] * transition_(s, t);
    double delta = 0.0;
    for (std::size_t s = 0; s < k; ++s) delta += std::fabs(next[s] - pi[s]);
    pi = std::move(next);
    if (delta < 1e-14) break;
  }
  return pi;
}

std::size_t NgramModel::VecHash::operator()(const std::vector<Symbol>& key) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (Symbol s : key) {
    h ^= s;
    h *= 1099511628211ULL;
  }
  return h;
}

NgramModel::NgramModel(Symbol alphabet_size, std::size_t order, double smoothing)
    : alphabet_size_(alphabet_size), order_(order), smoothing_(smoothing) {
  if (alphabet_size_ == 0) fail(ErrorKind::InvalidDimension, "alphabet must be nonempty");
  if (order_ == 0) fail(ErrorKind::InvalidDimension, "order must be >= 1");
  if (!(smoothing_ > 0.0)) fail(ErrorKind::ZeroProbability, "smoothing must be positive");
}

double NgramModel::cond_prob(std::span<const Symbol> prefix, Symbol next) const {
  if (next >= alphabet_size_) fail(ErrorKind::InvalidDimension, "symbol outside alphabet");
  const std::size_t ctx_len = std::min(prefix.size(), order_ - 1);
  const std::vector<Symbol> ctx(prefix.end() - ctx_len, prefix.end());
  std::uint64_t seen = 0;
  std::uint64_t total = 0;
  if (const auto it = counts_.find(ctx); it != counts_.end()) {
    total = it->second.total;
    if (const auto jt = it->second.per_symbol.find(next); jt != it->second.per_symbol.end())
      seen = jt->second;
  }
  return (static_cast<double>(seen) + smoothing_) /
         (static_cast<double>(total) + smoothing_ * static_cast<double>(alphabet_size_));
}

NgramModel fit_ngram(const TokenStream& corpus, std::size_t order, double smoothing) {
  NgramModel model(corpus.alphabet_size, order, smoothing);
  if (corpus.symbols.size() <= order)
    fail(ErrorKind::InsufficientData, "corpus must be longer than the model order");
  const std::size_t ctx_len = order - 1;
  for (std::size_t i = ctx_len; i < corpus.symbols.size(); ++i) {
    std::vector<Symbol> ctx(corpus.symbols.begin() + (i - ctx_len), corpus.symbols.begin() + i);
    auto& bucket = model.counts_[std::move(ctx)];
    bucket.per_symbol[corpus.symbols[i]] += 1;
    bucket.total += 1;
  }
  return model;
}

BayesPredictor::BayesPredictor(Symbol alphabet_size, double prior)
    : alphabet_size_(alphabet_size), prior_(prior) {
  if (alphabet_size_ == 0) fail(ErrorKind::InvalidDimension, "alphabet must be nonempty");
  if (!(prior_ > 0.0)) fail(ErrorKind::ZeroProbability, "prior must be positive");
}

double BayesPredictor::cond_prob(std::span<const Symbol> prefix, Symbol next) const {
  if (next >= alphabet_size_) fail(ErrorKind::InvalidDimension, "symbol outside alphabet");
  std::uint64_t count = 0;
  for (Symbol s : prefix)
    if (s == next) ++count;
  return (static_cast<double>(count) + prior_) /
         (static_cast<double>(prefix.size()) + prior_ * static_cast<double>(alphabet_size_));
}

BayesPredictor bayes_predictor(Symbol alphabet_size, double prior) {
  return BayesPredictor(alphabet_size, prior);
}

std::vector<double> velocity(const PredictiveModel& model, const TokenStream& stream) {
  if (model.alphabet_size() != stream.alphabet_size)
    fail(ErrorKind::DimensionMismatch, "model and stream alphabets differ");
  std::vector<double> v;
  v.reserve(stream.symbols.size());
  const std::span<const Symbol> all(stream.symbols);
  for (std::size_t t = 0; t < stream.symbols.size(); ++t)
    v.push_back(-std::log(checked_prob(model, all.first(t), stream.symbols[t])));
  return v;
}

std::vector<double> acceleration(std::span<const double> v) {
  if (v.size() < 2) fail(ErrorKind::InsufficientData, "need at least two velocities");
  std::vector<double> a;
  a.reserve(v.size() - 1);
  for (std::size_t t = 0; t + 1 < v.size(); ++t) a.push_back(v[t + 1] - v[t]);
  return a;
}

double distance(const PredictiveModel& model, const TokenStream& stream) {
  if (model.alphabet_size() != stream.alphabet_size)
    fail(ErrorKind::DimensionMismatch, "model and stream alphabets differ");
  // The chain-rule product in 80-bit precision; log only at the end.  This is
  // deliberately a different route from summing velocities.
  long double product = 1.0L;
  const std::span<const Symbol> all(stream.symbols);
  for (std::size_t t = 0; t < stream.symbols.size(); ++t)
    product *= static_cast<long double>(checked_prob(model, all.first(t), stream.symbols[t]));
  if (!(product > 0.0L))
    fail(ErrorKind::ZeroProbability, "sequence probability underflowed to zero");
  return static_cast<double>(-std::log(product));
}

KinematicsSeries kinematics_series(const PredictiveModel& model, const TokenStream& stream) {
  KinematicsSeries out;
  out.velocity = velocity(model, stream);
  if (out.velocity.size() >= 2) out.acceleration = acceleration(out.velocity);
  out.distance.reserve(out.velocity.size());
  double running = 0.0;
  for (double v : out.velocity) {
    running += v;
    out.distance.push_back(running);
  }
  return out;
}

namespace {

void enumerate_curve(const PredictiveModel& law, const PredictiveModel& model,
                     std::size_t horizon, std::vector<Symbol>& prefix, double weight,
                     std::vector<double>& acc) {
  const std::size_t t = prefix.size();
  if (t == horizon) return;
  const Symbol k = law.alphabet_size();
  const std::span<const Symbol> view(prefix);
  for (Symbol s = 0; s < k; ++s) {
    const double p_src = law.cond_prob(view, s);
    if (p_src <= 0.0) continue;  // impossible continuations carry no mass
    const double q = checked_prob(model, view, s);
    acc[t] += weight * p_src * (-std::log(q));
    prefix.push_back(s);
    enumerate_curve(law, model, horizon, prefix, weight * p_src, acc);
    prefix.pop_back();
  }
}

}  // namespace

TokenStream sample_stream(const PredictiveModel& law, std::size_t length, SeededRng& rng) {
  if (length == 0) fail(ErrorKind::InsufficientData, "cannot sample an empty stream");
  const Symbol k = law.alphabet_size();
  std::vector<Symbol> out;
  out.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double u = rng.next_double();
    double cum = 0.0;
    Symbol chosen = k - 1;
    const std::span<const Symbol> view(out);
    for (Symbol s = 0; s < k; ++s) {
      cum += law.cond_prob(view, s);
      if (u < cum) {
        chosen = s;
        break;
      }
    }
    out.push_back(chosen);
  }
  return TokenStream(std::move(out), k);
}

std::vector<double> expected_velocity_curve(const PredictiveModel& law,
                                            const PredictiveModel& model, std::size_t horizon,
                                            std::optional<std::size_t> mc_samples,
                                            SeededRng* rng) {
  if (horizon == 0) fail(ErrorKind::InvalidDimension, "horizon must be >= 1");
  if (law.alphabet_size() != model.alphabet_size())
    fail(ErrorKind::DimensionMismatch, "law and model alphabets differ");
  std::vector<double> acc(horizon, 0.0);

  if (!mc_samples.has_value()) {
    double budget = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      budget *= static_cast<double>(law.alphabet_size());
      if (budget > 1e7)
        fail(ErrorKind::BudgetExceeded,
             "exact enumeration needs K^horizon <= 1e7; pass a Monte-Carlo sample count");
    }
    std::vector<Symbol> prefix;
    prefix.reserve(horizon);
    enumerate_curve(law, model, horizon, prefix, 1.0, acc);
    return acc;
  }

  if (*mc_samples == 0) fail(ErrorKind::InvalidDimension, "sample count must be >= 1");
  if (rng == nullptr) fail(ErrorKind::InvalidDimension, "Monte-Carlo mode needs a generator");
  for (std::size_t i = 0; i < *mc_samples; ++i) {
    SeededRng sub = rng->substream(i);
    const TokenStream stream = sample_stream(law, horizon, sub);
    const std::vector<double> v = velocity(model, stream);
    for (std::size_t t = 0; t < horizon; ++t) acc[t] += v[t];
  }
  for (double& x : acc) x /= static_cast<double>(*mc_samples);
  return acc;
}

}  // namespace lab::kinematics
