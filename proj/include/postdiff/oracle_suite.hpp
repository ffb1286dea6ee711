#pragma once

// Analytic-oracle verification suites. Each check compares the library
// against an independently computed reference (direct products, closed-form
// Gaussian densities, central finite differences, Monte-Carlo moments).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace postdiff {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct OracleOptions {
  std::uint64_t seed = 0;
  int monte_carlo_runs = 10000;
  double dps_xi0 = 20.0;  // reconstruction-guidance scale for the Gaussian problem
  int separation_trials = 16;
};

CheckResult check_schedule();
CheckResult check_analytic_score(const OracleOptions& opt);
CheckResult check_unconditional_sampler(const OracleOptions& opt);
CheckResult check_exact_conditional(const OracleOptions& opt);
CheckResult check_reconstruction_guidance_error(const OracleOptions& opt);
CheckResult check_separation_likelihood(const OracleOptions& opt);
CheckResult check_operator_gradients(const OracleOptions& opt);
CheckResult check_dsp(const OracleOptions& opt);
CheckResult check_gaussian_separation(const OracleOptions& opt);

/// All of the above, in order. `on_result` is called as each check finishes.
std::vector<CheckResult> run_oracle_suite(const OracleOptions& opt,
                                          const std::function<void(const CheckResult&)>& on_result = {});

}  // namespace postdiff
