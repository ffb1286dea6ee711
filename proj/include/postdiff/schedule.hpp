#pragma once

// Discrete variance-preserving noise schedule. Steps are indexed 1..T; step 0
// is the clean signal (alpha_bar = 1).

#include <span>
#include <vector>

namespace postdiff {

class NoiseSchedule {
 public:
  /// Linear betas from beta_min to beta_max over `steps` steps.
  static NoiseSchedule linear(int steps, double beta_min, double beta_max);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

  /// betas[t], 1 <= t <= T.
  double beta(int t) const;
  /// alpha_bar[t], 0 <= t <= T; alpha_bar(0) == 1.
  double alpha_bar(int t) const;

  std::span<const double> betas() const { return betas_; }
  std::span<const double> alpha_bars() const { return alpha_bars_; }

  bool operator==(const NoiseSchedule&) const = default;

 private:
  NoiseSchedule(std::vector<double> betas, double beta_min, double beta_max);

  std::vector<double> betas_;       // index t-1
  std::vector<double> alpha_bars_;  // index t-1
  double beta_min_;
  double beta_max_;
};

/// sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps
std::vector<double> forward_noise(std::span<const double> x0, int t, std::span<const double> eps,
                                  const NoiseSchedule& sched);

/// -eps / sqrt(1 - alpha_bar(t)); requires t >= 1.
std::vector<double> score_from_eps(std::span<const double> eps_hat, int t,
                                   const NoiseSchedule& sched);

/// -sqrt(1 - alpha_bar(t)) * score; requires t >= 1.
std::vector<double> eps_from_score(std::span<const double> score, int t,
                                   const NoiseSchedule& sched);

/// Denoised estimate (x_t + (1 - alpha_bar) score) / sqrt(alpha_bar).
std::vector<double> estimate_x0(std::span<const double> x_t, int t, std::span<const double> score,
                                const NoiseSchedule& sched);

}  // namespace postdiff
