#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "postdiff/signal.hpp"

namespace postdiff {

/// Upper bound reported for (near-)perfect reconstructions.
inline constexpr double kSiSnrCapDb = 100.0;

/// Scale-invariant SNR in dB. Both signals are made zero-mean; the estimate is
/// projected onto the reference. Throws ConfigError on a silent reference.
double si_snr(std::span<const double> reference, std::span<const double> estimate);

/// Log-spectral distance: mean over frames of the RMS (over bins) difference
/// of log10 power spectra, magnitudes floored at 1e-8.
double lsd(std::span<const double> reference, std::span<const double> estimate,
           const StftConfig& cfg = {});

/// LSD restricted to bins whose centre frequency lies in [lo_hz, hi_hz].
double lsd_band(std::span<const double> reference, std::span<const double> estimate,
                double sample_rate, double lo_hz, double hi_hz, const StftConfig& cfg = {});

struct PermutationScore {
  bool swapped = false;  // true: est[0] <-> ref[1], est[1] <-> ref[0]
  double mean_db = 0.0;
};

PermutationScore si_snr_best_permutation(std::array<std::span<const double>, 2> refs,
                                         std::array<std::span<const double>, 2> ests);

struct MetricReport {
  std::string task;
  std::optional<double> si_snr_db;
  std::optional<double> input_si_snr_db;
  std::optional<double> lsd;
  std::optional<double> input_lsd;
  std::optional<double> low_band_lsd;
  std::optional<double> mel_mae;
  std::optional<bool> swapped;

  /// One JSON object per line.
  std::string to_json_line() const;
  /// Human-readable summary.
  std::string to_text() const;
};

}  // namespace postdiff
