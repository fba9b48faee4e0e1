#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "lab/errors.hpp"
#include "lab/kinematics.hpp"
#include "lab/rng.hpp"

using lab::ErrorKind;
using lab::LabError;
using lab::numerics::SeededRng;
using lab::numerics::Vec;
namespace kin = lab::kinematics;

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

kin::TokenStream stream_of(std::vector<kin::Symbol> symbols, kin::Symbol alphabet) {
  return kin::TokenStream(std::move(symbols), alphabet);
}

}  // namespace

TEST_SUITE_BEGIN("kinematics");

TEST_CASE("add-one sequential predictor matches hand-counted probabilities") {
  const kin::BayesPredictor model(3, 1.0);
  const std::vector<kin::Symbol> prefix{0, 0, 2};
  // counts: symbol 0 twice, symbol 2 once, prior mass one per symbol.
  CHECK(model.cond_prob(prefix, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(model.cond_prob(prefix, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(model.cond_prob(prefix, 2) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  CHECK(model.cond_prob({}, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("two-symbol add-one predictor repeats the last majority symbol") {
  const kin::BayesPredictor model(2, 1.0);
  const std::vector<kin::Symbol> ones{1, 1};
  CHECK(model.cond_prob(ones, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(model.cond_prob(ones, 0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("fitted bigram reproduces alternating-corpus counts") {
  const auto corpus = stream_of({0, 1, 0, 1, 0}, 2);
  const kin::NgramModel model = kin::fit_ngram(corpus, 2, 1.0);
  const std::vector<kin::Symbol> ctx0{0};
  // context 0 saw symbol 1 twice; add-one smoothing over two symbols.
  CHECK(model.cond_prob(ctx0, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(model.cond_prob(ctx0, 0) == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("unigram fit reduces to smoothed symbol frequencies") {
  const auto corpus = stream_of({0, 1, 0, 1, 0}, 2);
  const kin::NgramModel model = kin::fit_ngram(corpus, 1, 0.5);
  CHECK(model.cond_prob({}, 0) == doctest::Approx(3.5 / 6.0).epsilon(1e-15));
  CHECK(model.cond_prob({}, 1) == doctest::Approx(2.5 / 6.0).epsilon(1e-15));
}

TEST_CASE("fitting needs a corpus longer than the order") {
  CHECK(kind_of([] { kin::fit_ngram(stream_of({0, 1}, 2), 2, 1.0); }) ==
        ErrorKind::InsufficientData);
}

TEST_CASE("velocity of the uniform coin is log 2 everywhere") {
  const kin::FixedIidModel model{Vec{0.5, 0.5}};
  const auto v = kin::velocity(model, stream_of({0, 1, 1, 0, 1}, 2));
  for (double x : v) CHECK(x == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("acceleration is the first difference of velocity") {
  const std::vector<double> v{1.0, 0.5, 2.0};
  const auto a = kin::acceleration(v);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(a[1] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("zero-probability symbols are reported, not silently clipped") {
  const kin::FixedIidModel model{Vec{1.0, 0.0}};
  CHECK(kind_of([&] { kin::velocity(model, stream_of({0, 1}, 2)); }) ==
        ErrorKind::ZeroProbability);
}

TEST_CASE("product route and velocity-sum route agree on sampled streams") {
  SeededRng rng(2024);
  const kin::MarkovSource source(
      lab::numerics::Matrix(2, 2, {0.9, 0.1, 0.3, 0.7}), Vec{0.5, 0.5});
  for (int trial = 0; trial < 20; ++trial) {
    SeededRng sub = rng.substream(static_cast<std::uint64_t>(trial));
    const kin::TokenStream stream = source.sample(200, sub);
    const kin::NgramModel model = kin::fit_ngram(stream, 2, 0.5);
    const auto series = kin::kinematics_series(model, stream);
    const double total = std::accumulate(series.velocity.begin(), series.velocity.end(), 0.0);
    CHECK(std::abs(kin::distance(model, stream) - total) < 1e-12);
    CHECK(series.distance.back() == doctest::Approx(total).epsilon(1e-13));
    REQUIRE(series.acceleration.size() + 1 == series.velocity.size());
  }
}

TEST_CASE("expected surprisal of the add-one predictor on a fair coin, first steps") {
  const kin::FixedIidModel law{Vec{0.5, 0.5}};
  const kin::BayesPredictor model(2, 1.0);
  const auto curve = kin::expected_velocity_curve(law, model, 3);
  REQUIRE(curve.size() == 3);
  // Step 1: uniform prediction.  Step 2: match probability 1/2 against a
  // predictor that assigns 2/3 to a repeat -> (ln 1.5 + ln 3) / 2.
  CHECK(curve[0] == doctest::Approx(std::log(2.0)).epsilon(1e-13));
  CHECK(curve[1] == doctest::Approx(0.5 * std::log(4.5)).epsilon(1e-13));
}

TEST_CASE("exact curve matches its own Monte-Carlo estimate") {
  const kin::FixedIidModel law{Vec{0.3, 0.7}};
  const kin::BayesPredictor model(2, 1.0);
  const auto exact = kin::expected_velocity_curve(law, model, 4);
  SeededRng rng(11);
  const auto mc = kin::expected_velocity_curve(law, model, 4, 40000, &rng);
  REQUIRE(exact.size() == mc.size());
  for (std::size_t t = 0; t < exact.size(); ++t)
    CHECK(std::abs(exact[t] - mc[t]) < 0.02);
}

TEST_CASE("predictor matched to an exchangeable source has a non-increasing curve") {
  // The add-one predictor is the conditional law of the uniform-mixture
  // exchangeable source, so its expected surprisal can only fall with more
  // context.
  const kin::BayesPredictor urn(2, 1.0);
  const auto curve = kin::expected_velocity_curve(urn, urn, 8);
  REQUIRE(curve.size() == 8);
  CHECK(curve[0] == doctest::Approx(std::log(2.0)).epsilon(1e-13));
  for (std::size_t t = 0; t + 1 < curve.size(); ++t)
    CHECK(curve[t + 1] <= curve[t] + 1e-12);
}

TEST_CASE("exact enumeration refuses oversized alphabets") {
  const kin::BayesPredictor big(256, 1.0);
  CHECK(kind_of([&] { kin::expected_velocity_curve(big, big, 4); }) ==
        ErrorKind::BudgetExceeded);
}

TEST_CASE("sampling a stream is deterministic in the seed") {
  const kin::MarkovSource source = kin::MarkovSource::iid(Vec{0.2, 0.3, 0.5});
  SeededRng a(8), b(8);
  const auto s1 = source.sample(64, a);
  const auto s2 = source.sample(64, b);
  CHECK(s1.symbols == s2.symbols);
}

TEST_SUITE_END();
