#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>

#include "postdiff/data.hpp"
#include "postdiff/error.hpp"
#include "postdiff/gaussian.hpp"
#include "util.hpp"

using namespace postdiff;

namespace {

Eigen::MatrixXd random_spd(int d, std::mt19937_64& rng) {
  Eigen::MatrixXd B(d, d);
  std::normal_distribution<double> n;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) B(i, j) = n(rng);
  return B * B.transpose() / d + 0.3 * Eigen::MatrixXd::Identity(d, d);
}

double fd_log_density(const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov, std::vector<double> x,
                      int i, int t, const NoiseSchedule& s) {
  const double h = 1e-5;
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = noised_log_density(mu, cov, x, t, s);
  x[i] = x0 - h;
  const double dn = noised_log_density(mu, cov, x, t, s);
  return (up - dn) / (2 * h);
}

}  // namespace

TEST_CASE("standard normal stays standard under the VP process") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  const auto prior = GaussianPrior::standard(5);
  std::mt19937_64 rng(7);
  const auto x = testutil::randn(5, rng);
  for (int t : {1, 100, 200}) {
    const auto score = gaussian_analytic_score(prior, x, t, s);
    for (int i = 0; i < 5; ++i) CHECK(score[i] == doctest::Approx(-x[i]).epsilon(1e-12));
    const auto eps = gaussian_analytic_eps(prior, x, t, s);
    for (int i = 0; i < 5; ++i)
      CHECK(eps[i] == doctest::Approx(std::sqrt(1 - s.alpha_bar(t)) * x[i]).epsilon(1e-12));
  }
  const auto eps0 = gaussian_analytic_eps(prior, x, 0, s);
  CHECK(testutil::max_abs_diff(eps0, std::vector<double>(5, 0.0)) == 0.0);
}

TEST_CASE("scalar Gaussian at alpha_bar = 0.75") {
  const auto s = NoiseSchedule::linear(1, 0.25, 0.25);
  Eigen::VectorXd mu(1);
  mu << 0.0;
  Eigen::VectorXd var(1);
  var << 4.0;
  const auto prior = GaussianPrior::diagonal(mu, var);
  const std::vector<double> x{1.0};
  // marginal variance 0.75 * 4 + 0.25 = 3.25
  CHECK(gaussian_analytic_score(prior, x, 1, s)[0] == doctest::Approx(-1.0 / 3.25).epsilon(1e-14));
}

TEST_CASE("analytic score matches finite differences of the log density") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  std::mt19937_64 rng(11);
  const int d = 6;
  Eigen::VectorXd mu(d);
  for (int i = 0; i < d; ++i) mu(i) = 0.3 * i - 0.7;
  const GaussianPrior prior(mu, random_spd(d, rng));
  for (int t : {1, 40, 200}) {
    const auto x = testutil::randn(d, rng);
    const auto score = gaussian_analytic_score(prior, x, t, s);
    for (int i = 0; i < d; ++i)
      CHECK(score[i] ==
            doctest::Approx(fd_log_density(mu, prior.covariance(), x, i, t, s)).epsilon(1e-6));
  }
}

TEST_CASE("log density agrees with the closed form") {
  Eigen::VectorXd mu(2);
  mu << 1.0, -1.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 2.0, 0.5, 0.5, 1.0;
  const GaussianPrior prior(mu, cov);
  const std::vector<double> x{0.5, 0.2};
  Eigen::Vector2d r(x[0] - 1.0, x[1] + 1.0);
  const double expect =
      -0.5 * r.dot(cov.inverse() * r) - 0.5 * std::log(cov.determinant()) - std::log(2 * std::numbers::pi);
  CHECK(prior.log_density(x) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("score model caches match the direct formula") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  std::mt19937_64 rng(5);
  const int d = 8;
  const GaussianPrior prior(Eigen::VectorXd::Zero(d), random_spd(d, rng));
  const GaussianScoreModel model(prior, s);
  for (int t : {1, 25, 50}) {
    const auto x = testutil::randn(d, rng);
    CHECK(testutil::rel_err(model.score(x, t), gaussian_analytic_score(prior, x, t, s)) < 1e-12);
    CHECK(testutil::rel_err(model.predict_eps(x, t), gaussian_analytic_eps(prior, x, t, s)) < 1e-12);
  }
  CHECK_THROWS_AS(model.score(testutil::randn(d, rng), 51), ConfigError);
  CHECK_THROWS_AS(model.score(testutil::randn(d + 1, rng), 3), ConfigError);
}

TEST_CASE("marginal sampler has the right moments") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  Eigen::VectorXd mu(2);
  mu << 2.0, -1.0;
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 0.6, 0.6, 0.5;
  const GaussianScoreModel model(mu, cov, s);
  std::mt19937_64 rng(9);
  const int n = 40000, t = 120;
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> xs;
  for (int k = 0; k < n; ++k) {
    const auto x = model.sample_marginal(t, rng);
    xs.emplace_back(x[0], x[1]);
    m += xs.back();
  }
  m /= n;
  for (const auto& x : xs) c += (x - m) * (x - m).transpose();
  c /= n - 1;
  const double ab = s.alpha_bar(t);
  const Eigen::Vector2d m_exp = std::sqrt(ab) * mu;
  const Eigen::Matrix2d c_exp = ab * cov + (1 - ab) * Eigen::Matrix2d::Identity();
  CHECK((m - m_exp).norm() < 0.02);
  CHECK((c - c_exp).norm() < 0.03);
}

TEST_CASE("linear posterior pins the observed coordinates") {
  const auto prior = ar1_prior(0.9, 6);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 6);
  A(0, 1) = 1.0;
  A(1, 4) = 1.0;
  Eigen::VectorXd y(2);
  y << 0.8, -0.4;
  const auto post = gaussian_linear_posterior(prior, A, y);
  CHECK(post.mean(1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(post.mean(4) == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(std::abs(post.covariance(1, 1)) < 1e-12);
  CHECK(std::abs(post.covariance(4, 4)) < 1e-12);
  // Markov property of AR(1): x0 depends on x1 only.
  CHECK(post.mean(0) == doctest::Approx(0.9 * 0.8).epsilon(1e-12));
  CHECK(post.covariance(0, 0) == doctest::Approx(1 - 0.81).epsilon(1e-10));

  Eigen::MatrixXd bad(2, 6);
  bad.row(0) = A.row(0);
  bad.row(1) = 2 * A.row(0);
  CHECK_THROWS_AS(gaussian_linear_posterior(prior, bad, y), NumericError);
  CHECK_THROWS_AS(gaussian_linear_posterior(prior, Eigen::MatrixXd::Zero(2, 5), y), ConfigError);
}

TEST_CASE("exact conditional score equals the posterior score model") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  const auto prior = ar1_prior(0.8, 5);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 5);
  A(0, 2) = 1.0;
  Eigen::VectorXd y(1);
  y << 1.2;
  const auto post = gaussian_linear_posterior(prior, A, y);
  const GaussianScoreModel model(post.mean, post.covariance, s);
  std::mt19937_64 rng(4);
  for (int t : {1, 100, 200}) {
    const auto x = testutil::randn(5, rng);
    CHECK(testutil::rel_err(exact_gaussian_conditional_score(prior, A, y, x, t, s), model.score(x, t)) <
          1e-10);
  }
  CHECK_THROWS_AS(exact_gaussian_conditional_score(prior, A, y, testutil::randn(5, rng), 0, s),
                  ConfigError);
}

TEST_CASE("prior validation") {
  CHECK_THROWS_AS(GaussianPrior(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(3, 3)), ConfigError);
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, 0.1, 1.0;
  CHECK_THROWS_AS(GaussianPrior(Eigen::VectorXd::Zero(2), asym), ConfigError);
  Eigen::MatrixXd indef(2, 2);
  indef << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(GaussianPrior(Eigen::VectorXd::Zero(2), indef), NumericError);
  CHECK_THROWS_AS(GaussianPrior::diagonal(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)),
                  ConfigError);
}
