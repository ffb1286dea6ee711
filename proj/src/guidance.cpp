#include "postdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <sstream>

#include "postdiff/kernels.hpp"

namespace postdiff {

namespace {

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ConfigError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
}

void check_step(int t, const NoiseSchedule& sched, const char* what) {
  if (t < 1 || t > sched.steps())
    throw ConfigError(std::string(what) + ": step " + std::to_string(t) + " outside 1.." +
                      std::to_string(sched.steps()));
}

double norm2(std::span<const double> x) { return std::sqrt(kernels::dot(x.data(), x.data(), x.size())); }

double rms_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return a.empty() ? 0.0 : std::sqrt(s / static_cast<double>(a.size()));
}

bool all_finite(std::span<const double> x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

std::string_view to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::None: return "none";
    case GuidanceMode::Imputation: return "imputation";
    case GuidanceMode::Reconstruction: return "reconstruction";
    case GuidanceMode::Separation: return "separation";
    case GuidanceMode::ExactGaussian: return "exact_gaussian";
  }
  return "?";
}

GuidanceMode parse_guidance_mode(std::string_view text) {
  for (auto m : {GuidanceMode::None, GuidanceMode::Imputation, GuidanceMode::Reconstruction,
                 GuidanceMode::Separation, GuidanceMode::ExactGaussian})
    if (text == to_string(m)) return m;
  throw ConfigError("unknown guidance mode '" + std::string(text) +
                    "' (none, imputation, reconstruction, separation, exact_gaussian)");
}

std::string_view to_string(AncestralVariance v) {
  return v == AncestralVariance::BetaTilde ? "beta_tilde" : "beta";
}

AncestralVariance parse_ancestral_variance(std::string_view text) {
  if (text == "beta_tilde") return AncestralVariance::BetaTilde;
  if (text == "beta") return AncestralVariance::Beta;
  throw ConfigError("unknown ancestral variance '" + std::string(text) + "' (beta_tilde, beta)");
}

void validate(const GuidanceConfig& cfg) {
  if (!(cfg.xi0 >= 0.0) || !std::isfinite(cfg.xi0)) throw ConfigError("guidance: xi0 must be >= 0");
  if (!(cfg.norm_eps > 0.0)) throw ConfigError("guidance: norm_eps must be positive");
  if (cfg.snapshot_every < 0) throw ConfigError("guidance: snapshot_every must be >= 0");
}

std::string SamplerTrace::to_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "t,grad_norm,residual\n";
  for (const auto& r : steps) out << r.t << ',' << r.grad_norm << ',' << r.residual << '\n';
  return out.str();
}

// ------------------------------------------------------------ reverse step

double ancestral_sigma(int t, const NoiseSchedule& sched, AncestralVariance variance) {
  check_step(t, sched, "ancestral_sigma");
  const double beta = sched.beta(t);
  if (variance == AncestralVariance::Beta) return std::sqrt(beta);
  return std::sqrt((1.0 - sched.alpha_bar(t - 1)) / (1.0 - sched.alpha_bar(t)) * beta);
}

std::vector<double> ddpm_reverse_step(std::span<const double> x_t, int t,
                                      std::span<const double> eps_hat, const NoiseSchedule& sched,
                                      std::span<const double> z, AncestralVariance variance) {
  check_step(t, sched, "ddpm_reverse_step");
  check_same(x_t.size(), eps_hat.size(), "ddpm_reverse_step");
  check_same(x_t.size(), z.size(), "ddpm_reverse_step");
  const double beta = sched.beta(t);
  const double c_eps = beta / std::sqrt(1.0 - sched.alpha_bar(t));
  const double inv_sqrt_a = 1.0 / std::sqrt(1.0 - beta);
  const double sigma = ancestral_sigma(t, sched, variance);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (x_t[i] - c_eps * eps_hat[i]) * inv_sqrt_a + sigma * z[i];
  return out;
}

// ------------------------------------------------------------ score edits

std::vector<double> impute_score(std::span<const double> score, std::span<const double> x_t, int t,
                                 std::span<const double> y, const LowpassOperator& lpf,
                                 const NoiseSchedule& sched, StepStats* stats) {
  check_step(t, sched, "impute_score");
  check_same(score.size(), x_t.size(), "impute_score");
  check_same(y.size(), x_t.size(), "impute_score");
  const double ab = sched.alpha_bar(t);
  auto x0 = estimate_x0(x_t, t, score, sched);
  const auto low = lpf.apply(x0);
  double moved = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double delta = y[i] - low[i];
    x0[i] += delta;
    moved += delta * delta;
  }
  const double sa = std::sqrt(ab);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (sa * x0[i] - x_t[i]) / (1.0 - ab);
  if (stats) {
    stats->grad_norm = std::sqrt(moved);
    stats->residual = rms_diff(lpf.apply(x0), y);
    stats->x0_hat = std::move(x0);
  }
  return out;
}

std::vector<double> impute_score(std::span<const double> score, std::span<const double> x_t, int t,
                                 std::span<const double> y, const LowpassSpec& lpf,
                                 const NoiseSchedule& sched) {
  return impute_score(score, x_t, t, y, LowpassOperator(lpf), sched);
}

std::vector<double> recon_guided_score(std::span<const double> score, std::span<const double> x_t,
                                       int t, std::span<const double> y, const Operator& op,
                                       const GuidanceConfig& cfg, const NoiseSchedule& sched,
                                       StepStats* stats) {
  check_step(t, sched, "recon_guided_score");
  check_same(score.size(), x_t.size(), "recon_guided_score");
  const double ab = sched.alpha_bar(t);
  auto x0 = estimate_x0(x_t, t, score, sched);
  auto g = op.residual_grad(x0, y);
  const double scale = 2.0 / std::sqrt(ab);
  for (auto& v : g) v *= scale;
  const double gn = norm2(g);
  if (!std::isfinite(gn))
    throw NumericError("reconstruction guidance: non-finite gradient at step " + std::to_string(t));
  const double xi = cfg.xi0 / (gn + cfg.norm_eps);
  std::vector<double> out(score.begin(), score.end());
  kernels::axpy(-xi, g.data(), out.data(), out.size());
  if (stats) {
    stats->grad_norm = gn;
    stats->residual = rms_diff(op.apply(x0), y);
    stats->x0_hat = std::move(x0);
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> separation_likelihood_grad(
    std::span<const double> x1_t, std::span<const double> x2_t, int t, std::span<const double> y,
    const NoiseSchedule& sched) {
  check_step(t, sched, "separation_likelihood_grad");
  check_same(x1_t.size(), x2_t.size(), "separation_likelihood_grad");
  check_same(x1_t.size(), y.size(), "separation_likelihood_grad");
  const double ab = sched.alpha_bar(t);
  const double sa = std::sqrt(ab);
  std::vector<double> g(y.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] = sa * (y[i] - (x1_t[i] + x2_t[i]) / sa) / (2.0 * (1.0 - ab));
  return {g, g};
}

// ------------------------------------------------------------ rules

ScoreRule imputation_rule(const LowpassOperator& lpf, std::vector<double> y,
                          const NoiseSchedule& sched) {
  return [&lpf, &sched, y = std::move(y)](std::span<const double> x_t, int t,
                                          std::vector<double>& score, StepStats& stats) {
    score = impute_score(score, x_t, t, y, lpf, sched, &stats);
  };
}

ScoreRule reconstruction_rule(const Operator& op, std::vector<double> y, const GuidanceConfig& cfg,
                              const NoiseSchedule& sched) {
  return [&op, &sched, cfg, y = std::move(y)](std::span<const double> x_t, int t,
                                              std::vector<double>& score, StepStats& stats) {
    score = recon_guided_score(score, x_t, t, y, op, cfg, sched, &stats);
  };
}

ScoreRule separation_rule(std::vector<double> y, const GuidanceConfig& cfg,
                          const NoiseSchedule& sched) {
  return [&sched, xi0 = cfg.xi0, y = std::move(y)](std::span<const double> x_t, int t,
                                                   std::vector<double>& score, StepStats& stats) {
    const std::size_t n = y.size();
    check_same(x_t.size(), 2 * n, "separation rule");
    const auto [g1, g2] = separation_likelihood_grad(x_t.first(n), x_t.subspan(n), t, y, sched);
    kernels::axpy(xi0, g1.data(), score.data(), n);
    kernels::axpy(xi0, g2.data(), score.data() + n, n);
    stats.grad_norm = norm2(g1);
    const double sa = std::sqrt(sched.alpha_bar(t));
    double r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (x_t[i] + x_t[n + i]) / sa - y[i];
      r += d * d;
    }
    stats.residual = std::sqrt(r / static_cast<double>(n));
  };
}

ScoreRule exact_gaussian_rule(const GaussianPrior& prior, Eigen::MatrixXd A, Eigen::VectorXd y,
                              const NoiseSchedule& sched) {
  return [&prior, &sched, A = std::move(A), y = std::move(y)](
             std::span<const double> x_t, int t, std::vector<double>& score, StepStats&) {
    score = exact_gaussian_conditional_score(prior, A, y, x_t, t, sched);
  };
}

std::vector<double> PairScoreModel::predict_eps(std::span<const double> x_t, int t) const {
  if (x_t.size() % 2 != 0) throw ConfigError("pair model: joint state must have even length");
  const std::size_t n = x_t.size() / 2;
  auto out = first_.predict_eps(x_t.first(n), t);
  const auto second = second_.predict_eps(x_t.subspan(n), t);
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

// ------------------------------------------------------------ sampler

SampleResult sample_chain(const ScoreModel& model, std::size_t dim, const NoiseSchedule& sched,
                          const GuidanceConfig& cfg, const ScoreRule& rule,
                          std::span<const double> initial) {
  validate(cfg);
  if (dim == 0) throw ConfigError("sampler: zero dimension");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> x;
  if (initial.empty()) {
    x.resize(dim);
    for (auto& v : x) v = normal(rng);
  } else {
    check_same(initial.size(), dim, "sampler initial state");
    x.assign(initial.begin(), initial.end());
  }

  SampleResult result;
  result.trace.steps.reserve(static_cast<std::size_t>(sched.steps()));
  std::vector<double> z(dim, 0.0);
  for (int t = sched.steps(); t >= 1; --t) {
    auto eps = model.predict_eps(x, t);
    check_same(eps.size(), dim, "sampler model output");
    StepStats stats;
    if (rule) {
      const auto base = score_from_eps(eps, t, sched);
      auto score = base;
      rule(x, t, score, stats);
      if (score != base) eps = eps_from_score(score, t, sched);
    }
    TraceRecord rec{t, stats.grad_norm, stats.residual, {}};
    if (cfg.snapshot_every > 0 && (t - 1) % cfg.snapshot_every == 0)
      rec.x0_hat = stats.x0_hat.empty() ? estimate_x0(x, t, score_from_eps(eps, t, sched), sched)
                                        : std::move(stats.x0_hat);

    if (t > 1) {
      for (auto& v : z) v = normal(rng);
    } else {
      std::fill(z.begin(), z.end(), 0.0);
    }
    x = ddpm_reverse_step(x, t, eps, sched, z, cfg.variance);
    result.trace.steps.push_back(std::move(rec));
    if (!all_finite(x))
      throw SamplingError("sampler: state became non-finite at step " + std::to_string(t),
                          std::move(result.trace));
  }
  result.x0 = std::move(x);
  return result;
}

// ------------------------------------------------------------ tasks

std::string_view to_string(Task task) {
  switch (task) {
    case Task::Bwe: return "bwe";
    case Task::Declip: return "declip";
    case Task::Vocode: return "vocode";
    case Task::Separate: return "separate";
  }
  return "?";
}

Task parse_task(std::string_view text) {
  for (auto t : {Task::Bwe, Task::Declip, Task::Vocode, Task::Separate})
    if (text == to_string(t)) return t;
  throw ConfigError("unknown task '" + std::string(text) + "' (bwe, declip, vocode, separate)");
}

GuidanceMode default_guidance(Task task) {
  switch (task) {
    case Task::Bwe: return GuidanceMode::Imputation;
    case Task::Declip:
    case Task::Vocode: return GuidanceMode::Reconstruction;
    case Task::Separate: return GuidanceMode::Separation;
  }
  return GuidanceMode::None;
}

std::size_t signal_length_for(Task task, std::size_t observation_size, const TaskSetup& setup) {
  if (task != Task::Vocode) return observation_size;
  const auto n_mels = static_cast<std::size_t>(setup.mel.n_mels);
  if (observation_size == 0 || observation_size % n_mels != 0)
    throw ConfigError("vocode: observation size is not a multiple of n_mels");
  const std::size_t frames = observation_size / n_mels;
  if (frames < 2) throw ConfigError("vocode: need at least two mel frames");
  return (frames - 1) * static_cast<std::size_t>(setup.mel.hop);
}

InverseResult solve_inverse(Task task, std::span<const double> y, const ScoreModel& model,
                            const NoiseSchedule& sched, const GuidanceConfig& cfg,
                            const TaskSetup& setup) {
  validate(cfg);
  const GuidanceMode bound = default_guidance(task);
  if (cfg.mode != GuidanceMode::None && cfg.mode != bound)
    throw ConfigError("task " + std::string(to_string(task)) + " uses " +
                      std::string(to_string(bound)) + " guidance, not " +
                      std::string(to_string(cfg.mode)));
  const bool guided = cfg.mode != GuidanceMode::None;
  const std::size_t n = signal_length_for(task, y.size(), setup);
  const std::vector<double> obs(y.begin(), y.end());

  InverseResult result;
  switch (task) {
    case Task::Bwe: {
      const LowpassOperator lpf(setup.lowpass);
      lpf.output_size(n);
      auto r = sample_chain(model, n, sched, cfg, guided ? imputation_rule(lpf, obs, sched) : ScoreRule{});
      result.outputs.push_back(std::move(r.x0));
      result.trace = std::move(r.trace);
      break;
    }
    case Task::Declip:
    case Task::Vocode: {
      std::unique_ptr<Operator> op;
      if (task == Task::Declip)
        op = std::make_unique<ClipOperator>(setup.clip);
      else
        op = std::make_unique<MelOperator>(setup.mel);
      check_same(op->output_size(n), obs.size(), "observation");
      auto r = sample_chain(model, n, sched, cfg,
                            guided ? reconstruction_rule(*op, obs, cfg, sched) : ScoreRule{});
      result.outputs.push_back(std::move(r.x0));
      result.trace = std::move(r.trace);
      break;
    }
    case Task::Separate: {
      const PairScoreModel joint(model, setup.second_model ? *setup.second_model : model);
      auto r = sample_chain(joint, 2 * n, sched, cfg,
                            guided ? separation_rule(obs, cfg, sched) : ScoreRule{});
      result.outputs.emplace_back(r.x0.begin(), r.x0.begin() + static_cast<long>(n));
      result.outputs.emplace_back(r.x0.begin() + static_cast<long>(n), r.x0.end());
      result.trace = std::move(r.trace);
      break;
    }
  }
  return result;
}

}  // namespace postdiff
