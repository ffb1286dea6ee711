#pragma once

// Closed-form Gaussian priors and the exact scores of their noised marginals.
// These are verification oracles: with a Gaussian prior and the VP forward
// process, x_t ~ N(sqrt(ab) mu, ab Sigma + (1 - ab) I) for every step.

#include <Eigen/Dense>
#include <random>
#include <span>
#include <vector>

#include "postdiff/schedule.hpp"
#include "postdiff/score_model.hpp"

namespace postdiff {

class GaussianPrior {
 public:
  /// Full covariance; must be symmetric positive definite.
  GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
  /// Diagonal covariance; every entry must be > 0.
  static GaussianPrior diagonal(Eigen::VectorXd mean, const Eigen::VectorXd& variances);
  static GaussianPrior standard(int dim);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }
  bool is_diagonal() const { return diagonal_; }

  double log_density(std::span<const double> x) const;

 private:
  GaussianPrior(Eigen::VectorXd mean, Eigen::MatrixXd covariance, bool diagonal);
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  bool diagonal_ = false;
};

/// Log-density of the step-t marginal N(sqrt(ab) mu, ab Sigma + (1 - ab) I).
double noised_log_density(const Eigen::VectorXd& mean, const Eigen::MatrixXd& covariance,
                          std::span<const double> x_t, int t, const NoiseSchedule& sched);

/// Exact eps_hat for a Gaussian prior: -sqrt(1 - ab) * grad log p_t(x_t).
/// Zero at t = 0.
std::vector<double> gaussian_analytic_eps(const GaussianPrior& prior, std::span<const double> x_t,
                                          int t, const NoiseSchedule& sched);

/// Exact score grad log p_t(x_t) of a Gaussian prior.
std::vector<double> gaussian_analytic_score(const GaussianPrior& prior,
                                            std::span<const double> x_t, int t,
                                            const NoiseSchedule& sched);

/// ScoreModel backed by per-step cached precision matrices of the noised
/// marginal. Accepts positive semi-definite covariances (posteriors of
/// noiseless observations are singular) since the noised marginal stays SPD.
class GaussianScoreModel final : public ScoreModel {
 public:
  GaussianScoreModel(Eigen::VectorXd mean, const Eigen::MatrixXd& covariance,
                     const NoiseSchedule& sched);
  explicit GaussianScoreModel(const GaussianPrior& prior, const NoiseSchedule& sched)
      : GaussianScoreModel(prior.mean(), prior.covariance(), sched) {}

  std::vector<double> predict_eps(std::span<const double> x_t, int t) const override;
  std::vector<double> score(std::span<const double> x_t, int t) const;

  int dim() const { return static_cast<int>(mean_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return covariance_; }

  /// Draw from the exact step-t marginal (used to start oracle chains).
  std::vector<double> sample_marginal(int t, std::mt19937_64& rng) const;

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd covariance_;
  NoiseSchedule sched_;
  std::vector<Eigen::MatrixXd> precisions_;  // index t-1
};

/// Closed-form posterior of x0 given a noiseless linear observation y = A x0.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // PSD, rank d - rows(A)
};

/// Throws NumericError if A is not full row rank.
GaussianPosterior gaussian_linear_posterior(const GaussianPrior& prior, const Eigen::MatrixXd& A,
                                            const Eigen::VectorXd& y);

/// Exact conditional score grad log p_t(x_t | y) for a Gaussian prior and a
/// noiseless linear observation: the score of N(sqrt(ab) mu_p, ab Sigma_p + (1-ab) I).
std::vector<double> exact_gaussian_conditional_score(const GaussianPrior& prior,
                                                     const Eigen::MatrixXd& A,
                                                     const Eigen::VectorXd& y,
                                                     std::span<const double> x_t, int t,
                                                     const NoiseSchedule& sched);

/// Gaussian vector draw with the given Cholesky factor.
std::vector<double> draw_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower,
                                  std::mt19937_64& rng);

}  // namespace postdiff
