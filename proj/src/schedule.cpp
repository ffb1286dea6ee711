#include "postdiff/schedule.hpp"

#include <cmath>
#include <string>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
}

}  // namespace

NoiseSchedule::NoiseSchedule(std::vector<double> betas, double beta_min, double beta_max)
    : betas_(std::move(betas)), beta_min_(beta_min), beta_max_(beta_max) {
  alpha_bars_.resize(betas_.size());
  double running = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    running *= (1.0 - betas_[i]);
    alpha_bars_[i] = running;
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_min, double beta_max) {
  if (steps < 1) throw ConfigError("schedule: step count must be positive");
  if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min <= beta_max))
    throw ConfigError("schedule: require 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (steps == 1) {
    betas[0] = beta_min;
  } else {
    const double span = beta_max - beta_min;
    for (int s = 0; s < steps; ++s)
      betas[static_cast<std::size_t>(s)] =
          beta_min + static_cast<double>(s) / static_cast<double>(steps - 1) * span;
    betas.back() = beta_max;
  }
  return NoiseSchedule(std::move(betas), beta_min, beta_max);
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps())
    throw ConfigError("schedule: beta index " + std::to_string(t) + " out of range");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 0 || t > steps())
    throw ConfigError("schedule: alpha_bar index " + std::to_string(t) + " out of range");
  return alpha_bars_[static_cast<std::size_t>(t - 1)];
}

std::vector<double> forward_noise(std::span<const double> x0, int t, std::span<const double> eps,
                                  const NoiseSchedule& sched) {
  check_same_length(x0.size(), eps.size(), "forward_noise");
  const double ab = sched.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double s = std::sqrt(1.0 - ab);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + s * eps[i];
  return out;
}

std::vector<double> score_from_eps(std::span<const double> eps_hat, int t,
                                   const NoiseSchedule& sched) {
  if (t < 1) throw ConfigError("score_from_eps: step 0 carries no noise");
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<double> out(eps_hat.size());
  for (std::size_t i = 0; i < eps_hat.size(); ++i) out[i] = -eps_hat[i] / s;
  return out;
}

std::vector<double> eps_from_score(std::span<const double> score, int t,
                                   const NoiseSchedule& sched) {
  if (t < 1) throw ConfigError("eps_from_score: step 0 carries no noise");
  const double s = std::sqrt(1.0 - sched.alpha_bar(t));
  std::vector<double> out(score.size());
  for (std::size_t i = 0; i < score.size(); ++i) out[i] = -score[i] * s;
  return out;
}

std::vector<double> estimate_x0(std::span<const double> x_t, int t, std::span<const double> score,
                                const NoiseSchedule& sched) {
  check_same_length(x_t.size(), score.size(), "estimate_x0");
  const double ab = sched.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(ab);
  const double w = 1.0 - ab;
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) out[i] = (x_t[i] + w * score[i]) * inv;
  return out;
}

}  // namespace postdiff
