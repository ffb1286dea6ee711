#pragma once

// Ancestral DDPM sampling and the score-modifying conditioning rules.
//
// Every rule edits the unconditional score s(x_t, t) before the reverse step:
//   imputation      x0_hat' = x0_hat - LPF(x0_hat) + y;  s' = (sqrt(ab) x0_hat' - x_t) / (1 - ab)
//   reconstruction  g = (2 / sqrt(ab)) J^T (A(x0_hat) - y);  s' = s - xi0 / (|g| + delta) g
//   separation      s_i' = s_i + xi0 * sqrt(ab) (y - (x1 + x2) / sqrt(ab)) / (2 (1 - ab))
// Rules never touch the random stream, so a zero guidance contribution leaves
// the sampled trajectory bit-identical to the unconditional one.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "postdiff/error.hpp"
#include "postdiff/gaussian.hpp"
#include "postdiff/operators.hpp"
#include "postdiff/schedule.hpp"
#include "postdiff/score_model.hpp"

namespace postdiff {

enum class GuidanceMode { None, Imputation, Reconstruction, Separation, ExactGaussian };
enum class AncestralVariance { BetaTilde, Beta };

std::string_view to_string(GuidanceMode mode);
GuidanceMode parse_guidance_mode(std::string_view text);
std::string_view to_string(AncestralVariance v);
AncestralVariance parse_ancestral_variance(std::string_view text);

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::None;
  double xi0 = 1.0;
  double norm_eps = 1e-8;
  std::uint64_t seed = 0;
  AncestralVariance variance = AncestralVariance::BetaTilde;
  int snapshot_every = 0;  // > 0: keep x0_hat every n-th step in the trace
};

void validate(const GuidanceConfig& cfg);

struct TraceRecord {
  int t = 0;
  double grad_norm = 0.0;  // norm of the guidance term before scaling
  double residual = 0.0;   // RMS of the task's data-fit residual at x0_hat
  std::vector<double> x0_hat;  // empty unless snapshotted
};

struct SamplerTrace {
  std::vector<TraceRecord> steps;
  /// "t,grad_norm,residual" rows, one per recorded step.
  std::string to_csv() const;
};

/// Thrown when the chain state becomes non-finite; carries the trace so far.
class SamplingError : public NumericError {
 public:
  SamplingError(const std::string& what, SamplerTrace trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const SamplerTrace& trace() const { return trace_; }

 private:
  SamplerTrace trace_;
};

/// sigma_t of the ancestral step: sqrt(beta_tilde_t) or sqrt(beta_t).
double ancestral_sigma(int t, const NoiseSchedule& sched,
                       AncestralVariance variance = AncestralVariance::BetaTilde);

/// x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) eps_hat) / sqrt(1 - beta_t) + sigma_t z.
std::vector<double> ddpm_reverse_step(std::span<const double> x_t, int t,
                                      std::span<const double> eps_hat, const NoiseSchedule& sched,
                                      std::span<const double> z,
                                      AncestralVariance variance = AncestralVariance::BetaTilde);

/// Diagnostics a score rule reports for one step.
struct StepStats {
  double grad_norm = 0.0;
  double residual = 0.0;
  std::vector<double> x0_hat;  // filled when the rule already computed it
};

/// Replaces the low band of x0_hat with y.
std::vector<double> impute_score(std::span<const double> score, std::span<const double> x_t, int t,
                                 std::span<const double> y, const LowpassOperator& lpf,
                                 const NoiseSchedule& sched, StepStats* stats = nullptr);
std::vector<double> impute_score(std::span<const double> score, std::span<const double> x_t, int t,
                                 std::span<const double> y, const LowpassSpec& lpf,
                                 const NoiseSchedule& sched);

/// Reconstruction guidance with gradient-norm weighting; the score network is
/// treated as constant in x_t. Throws NumericError on a non-finite gradient.
std::vector<double> recon_guided_score(std::span<const double> score, std::span<const double> x_t,
                                       int t, std::span<const double> y, const Operator& op,
                                       const GuidanceConfig& cfg, const NoiseSchedule& sched,
                                       StepStats* stats = nullptr);

/// Gradient of log N(y; (x1 + x2) / sqrt(ab), 2 (1 - ab) / ab) with respect to
/// each source; both components are identical.
std::pair<std::vector<double>, std::vector<double>> separation_likelihood_grad(
    std::span<const double> x1_t, std::span<const double> x2_t, int t, std::span<const double> y,
    const NoiseSchedule& sched);

/// Edits `score` in place for the state x_t at step t.
using ScoreRule =
    std::function<void(std::span<const double> x_t, int t, std::vector<double>& score, StepStats&)>;

ScoreRule imputation_rule(const LowpassOperator& lpf, std::vector<double> y,
                          const NoiseSchedule& sched);
ScoreRule reconstruction_rule(const Operator& op, std::vector<double> y, const GuidanceConfig& cfg,
                              const NoiseSchedule& sched);
/// Acts on the joint state [x1; x2].
ScoreRule separation_rule(std::vector<double> y, const GuidanceConfig& cfg,
                          const NoiseSchedule& sched);
/// Replaces the score by the exact Gaussian conditional score.
ScoreRule exact_gaussian_rule(const GaussianPrior& prior, Eigen::MatrixXd A, Eigen::VectorXd y,
                              const NoiseSchedule& sched);

/// Two independent priors over the joint state [x1; x2].
class PairScoreModel final : public ScoreModel {
 public:
  PairScoreModel(const ScoreModel& first, const ScoreModel& second)
      : first_(first), second_(second) {}
  std::vector<double> predict_eps(std::span<const double> x_t, int t) const override;

 private:
  const ScoreModel& first_;
  const ScoreModel& second_;
};

struct SampleResult {
  std::vector<double> x0;
  SamplerTrace trace;
};

/// Runs T ancestral steps from x_T ~ N(0, I) (or from `initial` when given)
/// with a seeded generator. The rule, if any, edits the score at each step.
SampleResult sample_chain(const ScoreModel& model, std::size_t dim, const NoiseSchedule& sched,
                          const GuidanceConfig& cfg, const ScoreRule& rule = {},
                          std::span<const double> initial = {});

enum class Task { Bwe, Declip, Vocode, Separate };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);
GuidanceMode default_guidance(Task task);

struct TaskSetup {
  LowpassSpec lowpass;
  ClipSpec clip;
  MelSpec mel;
  /// Prior of the second source for separation; defaults to the main model.
  const ScoreModel* second_model = nullptr;
};

struct InverseResult {
  std::vector<std::vector<double>> outputs;  // one per source
  SamplerTrace trace;
};

/// Signal length implied by an observation of `observation_size` values.
std::size_t signal_length_for(Task task, std::size_t observation_size, const TaskSetup& setup);

/// Restores x from y with the task's guidance. cfg.mode must be None
/// (unconditional) or the task's own mode.
InverseResult solve_inverse(Task task, std::span<const double> y, const ScoreModel& model,
                            const NoiseSchedule& sched, const GuidanceConfig& cfg,
                            const TaskSetup& setup = {});

}  // namespace postdiff
