#include <doctest.h>

#include <cmath>
#include <random>

#include "postdiff/error.hpp"
#include "postdiff/schedule.hpp"
#include "util.hpp"

using namespace postdiff;

TEST_CASE("linear schedule endpoints and running product") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  CHECK(s.steps() == 200);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(200) == 0.02);
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.alpha_bar(1) == 1.0 - 1e-4);
  const double beta2 = 1e-4 + 0.0199 / 199.0;
  CHECK(s.alpha_bar(2) == doctest::Approx((1.0 - 1e-4) * (1.0 - beta2)).epsilon(1e-14));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.99970).epsilon(1e-5));

  long double prod = 1.0L;
  for (int t = 1; t <= 200; ++t) {
    CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * (1.0 - s.beta(t)));
    if (t > 1) {
      CHECK(s.beta(t) > s.beta(t - 1));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    prod *= 1.0L - (1e-4L + (t - 1) / 199.0L * (0.02L - 1e-4L));
  }
  CHECK(std::abs(s.alpha_bar(200) - static_cast<double>(prod)) < 1e-12);
  CHECK(s.alpha_bar(200) == doctest::Approx(0.132).epsilon(0.002));
}

TEST_CASE("single-step schedule") {
  const auto s = NoiseSchedule::linear(1, 1e-4, 0.02);
  CHECK(s.steps() == 1);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.alpha_bar(1) == 0.9999);
}

TEST_CASE("schedule rejects invalid parameters and indices") {
  CHECK_THROWS_AS(NoiseSchedule::linear(0, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::linear(-3, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.03, 0.02), ConfigError);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 1e-4, 1.0), ConfigError);
  const auto s = NoiseSchedule::linear(10, 1e-4, 0.02);
  CHECK_THROWS_AS(s.beta(0), ConfigError);
  CHECK_THROWS_AS(s.beta(11), ConfigError);
  CHECK_THROWS_AS(s.alpha_bar(-1), ConfigError);
  CHECK_THROWS_AS(s.alpha_bar(11), ConfigError);
}

TEST_CASE("forward noise, score conversion and x0 estimate") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  std::mt19937_64 rng(1);
  const auto x0 = testutil::randn(64, rng);
  const auto eps = testutil::randn(64, rng);

  CHECK(forward_noise(x0, 0, eps, s) == x0);
  const std::vector<double> zero(64, 0.0);
  const auto scaled = forward_noise(x0, 50, zero, s);
  for (std::size_t i = 0; i < x0.size(); ++i) CHECK(scaled[i] == std::sqrt(s.alpha_bar(50)) * x0[i]);

  for (int t : {1, 17, 100, 200}) {
    const auto xt = forward_noise(x0, t, eps, s);
    const auto score = score_from_eps(eps, t, s);
    const auto back = eps_from_score(score, t, s);
    CHECK(testutil::max_abs_diff(back, eps) < 1e-14);
    const auto x0_hat = estimate_x0(xt, t, score, s);
    CHECK(testutil::rel_err(x0_hat, x0) < 1e-10);
  }
  CHECK(score_from_eps(zero, 5, s) == zero);
  CHECK_THROWS_AS(score_from_eps(eps, 0, s), ConfigError);
  CHECK_THROWS_AS(forward_noise(x0, 3, std::vector<double>(3), s), ConfigError);
}

TEST_CASE("score from eps at alpha_bar = 0.75") {
  const auto s = NoiseSchedule::linear(1, 0.25, 0.25);
  REQUIRE(s.alpha_bar(1) == 0.75);
  const std::vector<double> e{1.0};
  CHECK(score_from_eps(e, 1, s)[0] == doctest::Approx(-2.0).epsilon(1e-15));
}

TEST_CASE("x0 estimate under the N(0, I) analytic score") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  std::mt19937_64 rng(2);
  const auto xt = testutil::randn(8, rng);
  for (int t : {1, 60, 200}) {
    std::vector<double> score(xt.size());
    for (std::size_t i = 0; i < xt.size(); ++i) score[i] = -xt[i];
    const double ab = s.alpha_bar(t);
    const auto x0 = estimate_x0(xt, t, score, s);
    for (std::size_t i = 0; i < xt.size(); ++i)
      CHECK(x0[i] == doctest::Approx((xt[i] - (1.0 - ab) * xt[i]) / std::sqrt(ab)));
  }
}

TEST_CASE("forward noise preserves unit variance") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  std::mt19937_64 rng(3);
  const auto x0 = testutil::randn(100000, rng);
  const auto eps = testutil::randn(100000, rng);
  for (int t : {10, 120, 200}) {
    const auto xt = forward_noise(x0, t, eps, s);
    double m = 0.0, v = 0.0;
    for (double x : xt) m += x;
    m /= xt.size();
    for (double x : xt) v += (x - m) * (x - m);
    v /= xt.size() - 1;
    CHECK(v == doctest::Approx(1.0).epsilon(0.05));
  }
}
