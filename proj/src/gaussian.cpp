#include "postdiff/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

void check_dim(std::size_t n, Eigen::Index d, const char* what) {
  if (static_cast<Eigen::Index>(n) != d)
    throw ConfigError(std::string(what) + ": expected dimension " + std::to_string(d) + ", got " +
                      std::to_string(n));
}

Eigen::MatrixXd noised_covariance(const Eigen::MatrixXd& cov, double ab) {
  Eigen::MatrixXd m = ab * cov;
  m.diagonal().array() += 1.0 - ab;
  return m;
}

Eigen::LLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(what) + ": covariance is not positive definite");
  return llt;
}

std::vector<double> marginal_score(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                                   std::span<const double> x_t, int t,
                                   const NoiseSchedule& sched) {
  check_dim(x_t.size(), mean.size(), "gaussian score");
  const double ab = sched.alpha_bar(t);
  const auto llt = factor_spd(noised_covariance(cov, ab), "gaussian score");
  const Eigen::VectorXd centered = as_vector(x_t) - std::sqrt(ab) * mean;
  return to_std(-llt.solve(centered));
}

}  // namespace

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance, bool diagonal)
    : mean_(std::move(mean)), covariance_(std::move(covariance)), diagonal_(diagonal) {
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
    throw ConfigError("GaussianPrior: covariance shape does not match mean");
  if (!covariance_.isApprox(covariance_.transpose(), 1e-12))
    throw ConfigError("GaussianPrior: covariance must be symmetric");
  factor_spd(covariance_, "GaussianPrior");
}

GaussianPrior::GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance)
    : GaussianPrior(std::move(mean), std::move(covariance), false) {}

GaussianPrior GaussianPrior::diagonal(Eigen::VectorXd mean, const Eigen::VectorXd& variances) {
  if ((variances.array() <= 0.0).any())
    throw ConfigError("GaussianPrior: diagonal variances must be positive");
  Eigen::MatrixXd cov = variances.asDiagonal();
  return GaussianPrior(std::move(mean), std::move(cov), true);
}

GaussianPrior GaussianPrior::standard(int dim) {
  return diagonal(Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim));
}

double GaussianPrior::log_density(std::span<const double> x) const {
  check_dim(x.size(), mean_.size(), "log_density");
  const auto llt = factor_spd(covariance_, "log_density");
  const Eigen::VectorXd c = as_vector(x) - mean_;
  const Eigen::VectorXd w = llt.matrixL().solve(c);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet + static_cast<double>(dim()) *
                                                std::log(2.0 * std::numbers::pi));
}

double noised_log_density(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                          std::span<const double> x_t, int t, const NoiseSchedule& sched) {
  check_dim(x_t.size(), mean.size(), "noised_log_density");
  const double ab = sched.alpha_bar(t);
  const auto llt = factor_spd(noised_covariance(covariance, ab), "noised_log_density");
  const Eigen::VectorXd c = as_vector(x_t) - std::sqrt(ab) * mean;
  const Eigen::VectorXd w = llt.matrixL().solve(c);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (w.squaredNorm() + logdet +
                 static_cast<double>(mean.size()) * std::log(2.0 * std::numbers::pi));
}

std::vector<double> gaussian_analytic_score(const GaussianPrior& prior,
                                            std::span<const double> x_t, int t,
                                            const NoiseSchedule& sched) {
  return marginal_score(prior.mean(), prior.covariance(), x_t, t, sched);
}

std::vector<double> gaussian_analytic_eps(const GaussianPrior& prior, std::span<const double> x_t,
                                          int t, const NoiseSchedule& sched) {
  auto s = gaussian_analytic_score(prior, x_t, t, sched);
  const double scale = -std::sqrt(1.0 - sched.alpha_bar(t));
  for (auto& v : s) v *= scale;
  return s;
}

GaussianScoreModel::GaussianScoreModel(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance,
                                       const NoiseSchedule& sched)
    : mean_(std::move(mean)), covariance_(covariance), sched_(sched) {
  if (covariance_.rows() != mean_.size() || covariance_.cols() != mean_.size())
    throw ConfigError("GaussianScoreModel: covariance shape does not match mean");
  const Eigen::Index d = mean_.size();
  precisions_.reserve(static_cast<std::size_t>(sched.steps()));
  for (int t = 1; t <= sched.steps(); ++t) {
    const auto llt = factor_spd(noised_covariance(covariance_, sched.alpha_bar(t)),
                                "GaussianScoreModel");
    precisions_.push_back(llt.solve(Eigen::MatrixXd::Identity(d, d)));
  }
}

std::vector<double> GaussianScoreModel::score(std::span<const double> x_t, int t) const {
  check_dim(x_t.size(), mean_.size(), "GaussianScoreModel");
  if (t < 1 || t > sched_.steps())
    throw ConfigError("GaussianScoreModel: step " + std::to_string(t) + " out of range");
  const double ab = sched_.alpha_bar(t);
  const Eigen::VectorXd centered = as_vector(x_t) - std::sqrt(ab) * mean_;
  return to_std(-(precisions_[static_cast<std::size_t>(t - 1)] * centered));
}

std::vector<double> GaussianScoreModel::predict_eps(std::span<const double> x_t, int t) const {
  auto s = score(x_t, t);
  const double scale = -std::sqrt(1.0 - sched_.alpha_bar(t));
  for (auto& v : s) v *= scale;
  return s;
}

std::vector<double> GaussianScoreModel::sample_marginal(int t, std::mt19937_64& rng) const {
  const double ab = sched_.alpha_bar(t);
  const auto llt = factor_spd(noised_covariance(covariance_, ab), "sample_marginal");
  return draw_gaussian(std::sqrt(ab) * mean_, llt.matrixL().toDenseMatrix(), rng);
}

GaussianPosterior gaussian_linear_posterior(const GaussianPrior& prior, const Eigen::MatrixXd& A,
                                            const Eigen::VectorXd& y) {
  if (A.cols() != prior.dim()) throw ConfigError("posterior: operator width != prior dimension");
  if (A.rows() != y.size()) throw ConfigError("posterior: operator height != observation size");
  if (A.rows() == 0) return {prior.mean(), prior.covariance()};
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < A.rows()) throw NumericError("posterior: operator is rank deficient");
  const Eigen::MatrixXd& S = prior.covariance();
  const Eigen::MatrixXd SAt = S * A.transpose();
  const auto llt = factor_spd(A * SAt, "posterior");
  GaussianPosterior post;
  post.mean = prior.mean() + SAt * llt.solve(y - A * prior.mean());
  post.covariance = S - SAt * llt.solve(SAt.transpose());
  post.covariance = 0.5 * (post.covariance + post.covariance.transpose()).eval();
  return post;
}

std::vector<double> exact_gaussian_conditional_score(const GaussianPrior& prior,
                                                     const Eigen::MatrixXd& A,
                                                     const Eigen::VectorXd& y,
                                                     std::span<const double> x_t, int t,
                                                     const NoiseSchedule& sched) {
  if (t < 1) throw ConfigError("exact conditional score: step must be >= 1");
  const auto post = gaussian_linear_posterior(prior, A, y);
  return marginal_score(post.mean, post.covariance, x_t, t, sched);
}

std::vector<double> draw_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                                  std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return to_std(mean + chol_lower.triangularView<Eigen::Lower>() * z);
}

}  // namespace postdiff
