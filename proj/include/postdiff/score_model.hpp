#pragma once

#include <span>
#include <vector>

namespace postdiff {

/// Anything that predicts the injected noise eps_hat(x_t, t).
///
/// Implementations must be deterministic given (x_t, t) and safe to call
/// concurrently from multiple threads.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual std::vector<double> predict_eps(std::span<const double> x_t, int t) const = 0;
};

}  // namespace postdiff
