#include "postdiff/data.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 clip_rng(std::uint64_t seed, std::size_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
}

}  // namespace

std::size_t ToyHarmonicConfig::length() const {
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

void validate(const ToyHarmonicConfig& cfg) {
  if (cfg.sample_rate <= 0) throw ConfigError("toy harmonic: sample rate must be positive");
  if (!(cfg.duration > 0.0) || cfg.length() < 2) throw ConfigError("toy harmonic: duration too short");
  if (!(cfg.f0_min > 0.0) || !(cfg.f0_min <= cfg.f0_max))
    throw ConfigError("toy harmonic: require 0 < f0_min <= f0_max");
  if (cfg.max_harmonics < 1) throw ConfigError("toy harmonic: need at least one harmonic");
  if (cfg.f0_max * cfg.max_harmonics >= cfg.sample_rate / 2.0)
    throw ConfigError("toy harmonic: f0_max * harmonics must stay below Nyquist");
  if (cfg.noise_floor < 0.0) throw ConfigError("toy harmonic: negative noise floor");
  if (!(cfg.peak > 0.0)) throw ConfigError("toy harmonic: peak must be positive");
}

ToyHarmonicDraw toy_harmonic_draw(const ToyHarmonicConfig& cfg, std::size_t index) {
  auto rng = clip_rng(cfg.seed, index);
  std::uniform_real_distribution<double> f0(cfg.f0_min, cfg.f0_max);
  std::uniform_int_distribution<int> k(1, cfg.max_harmonics);
  ToyHarmonicDraw d;
  d.f0 = f0(rng);
  d.harmonics = k(rng);
  return d;
}

std::vector<std::vector<double>> gen_toy_harmonic(const ToyHarmonicConfig& cfg, std::size_t n) {
  validate(cfg);
  const std::size_t len = cfg.length();
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::vector<std::vector<double>> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = clip_rng(cfg.seed, i);
    std::uniform_real_distribution<double> f0_dist(cfg.f0_min, cfg.f0_max);
    std::uniform_int_distribution<int> k_dist(1, cfg.max_harmonics);
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    std::normal_distribution<double> noise(0.0, cfg.noise_floor);
    const double f0 = f0_dist(rng);
    const int harmonics = k_dist(rng);
    std::vector<double> phases(static_cast<std::size_t>(harmonics));
    for (auto& p : phases) p = phase(rng);

    std::vector<double> x(len, 0.0);
    for (std::size_t s = 0; s < len; ++s) {
      const double t = static_cast<double>(s) / cfg.sample_rate;
      double v = 0.0;
      for (int k = 1; k <= harmonics; ++k)
        v += std::sin(kTwoPi * k * f0 * t + phases[static_cast<std::size_t>(k - 1)]) / k;
      const double env = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(s) / static_cast<double>(len - 1));
      x[s] = v * env;
    }
    const double peak = peak_abs(x);
    const double gain = peak > 0.0 ? cfg.peak / peak : 0.0;
    for (auto& v : x) v = v * gain + (cfg.noise_floor > 0.0 ? noise(rng) : 0.0);
    out.push_back(std::move(x));
  }
  return out;
}

GaussianPrior ar1_prior(double rho, int dim) {
  if (!(std::abs(rho) < 1.0)) throw ConfigError("ar1: |rho| must be < 1");
  if (dim < 1) throw ConfigError("ar1: dimension must be positive");
  Eigen::MatrixXd cov(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) cov(i, j) = std::pow(rho, std::abs(i - j));
  return GaussianPrior(Eigen::VectorXd::Zero(dim), std::move(cov));
}

Ar1Dataset gen_ar1(const Ar1Config& cfg, std::size_t n) {
  auto prior = ar1_prior(cfg.rho, cfg.dim);
  const double innovation = std::sqrt(1.0 - cfg.rho * cfg.rho);
  std::mt19937_64 rng(splitmix64(cfg.seed));
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> samples(n, std::vector<double>(static_cast<std::size_t>(cfg.dim)));
  for (auto& x : samples) {
    x[0] = normal(rng);
    for (std::size_t i = 1; i < x.size(); ++i) x[i] = cfg.rho * x[i - 1] + innovation * normal(rng);
  }
  return {std::move(samples), std::move(prior)};
}

double peak_abs(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::abs(v));
  return p;
}

Mixture make_mixture(std::span<const double> x1, std::span<const double> x2, double peak) {
  if (x1.size() != x2.size()) throw ConfigError("make_mixture: length mismatch");
  const double p1 = peak_abs(x1);
  const double p2 = peak_abs(x2);
  if (!(p1 > 0.0) || !(p2 > 0.0)) throw ConfigError("make_mixture: silent source");
  Mixture m;
  m.record = {peak / p1, peak / p2};
  m.x1.resize(x1.size());
  m.x2.resize(x2.size());
  m.y.resize(x1.size());
  for (std::size_t i = 0; i < x1.size(); ++i) {
    // Divide first so the peak sample lands on `peak` exactly.
    m.x1[i] = x1[i] / p1 * peak;
    m.x2[i] = x2[i] / p2 * peak;
    m.y[i] = m.x1[i] + m.x2[i];
  }
  return m;
}

}  // namespace postdiff
