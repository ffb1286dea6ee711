#include "postdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

constexpr double kMagFloor = 1e-8;

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

double lsd_bins(std::span<const double> reference, std::span<const double> estimate,
                const StftConfig& cfg, int k_lo, int k_hi) {
  if (reference.size() != estimate.size()) throw ConfigError("lsd: length mismatch");
  if (reference.size() < static_cast<std::size_t>(cfg.n_fft))
    throw ConfigError("lsd: signals shorter than one frame");
  if (k_lo > k_hi) throw ConfigError("lsd: empty frequency band");
  const auto a = stft(reference, cfg);
  const auto b = stft(estimate, cfg);
  auto logpow = [](std::complex<double> z) {
    const double m = std::max(std::abs(z), kMagFloor);
    return std::log10(m * m);
  };
  double total = 0.0;
  for (int f = 0; f < a.frames; ++f) {
    double acc = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
      const double d = logpow(a.at(k, f)) - logpow(b.at(k, f));
      acc += d * d;
    }
    total += std::sqrt(acc / (k_hi - k_lo + 1));
  }
  return total / a.frames;
}

}  // namespace

double si_snr(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size()) throw ConfigError("si_snr: length mismatch");
  const double mr = mean_of(reference);
  const double me = mean_of(estimate);
  double rr = 0.0, re = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double r = reference[i] - mr;
    rr += r * r;
    re += r * (estimate[i] - me);
  }
  if (!(rr > 0.0)) throw ConfigError("si_snr: reference is silent");
  const double alpha = re / rr;
  double target = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * (reference[i] - mr);
    const double e = (estimate[i] - me) - s;
    target += s * s;
    noise += e * e;
  }
  const double db = 10.0 * std::log10(target / (noise + 1e-12) + 1e-300);
  return std::min(db, kSiSnrCapDb);
}

double lsd(std::span<const double> reference, std::span<const double> estimate,
           const StftConfig& cfg) {
  return lsd_bins(reference, estimate, cfg, 0, cfg.bins() - 1);
}

double lsd_band(std::span<const double> reference, std::span<const double> estimate,
                double sample_rate, double lo_hz, double hi_hz, const StftConfig& cfg) {
  const double bin_hz = sample_rate / cfg.n_fft;
  const int k_lo = std::max(0, static_cast<int>(std::ceil(lo_hz / bin_hz)));
  const int k_hi = std::min(cfg.bins() - 1, static_cast<int>(std::floor(hi_hz / bin_hz)));
  return lsd_bins(reference, estimate, cfg, k_lo, k_hi);
}

PermutationScore si_snr_best_permutation(std::array<std::span<const double>, 2> refs,
                                         std::array<std::span<const double>, 2> ests) {
  const double direct = 0.5 * (si_snr(refs[0], ests[0]) + si_snr(refs[1], ests[1]));
  const double swapped = 0.5 * (si_snr(refs[0], ests[1]) + si_snr(refs[1], ests[0]));
  if (swapped > direct) return {true, swapped};
  return {false, direct};
}

std::string MetricReport::to_json_line() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  auto put = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  put("si_snr_db", si_snr_db);
  put("input_si_snr_db", input_si_snr_db);
  put("lsd", lsd);
  put("input_lsd", input_lsd);
  put("low_band_lsd", low_band_lsd);
  put("mel_mae", mel_mae);
  put("swapped", swapped);
  return j.dump();
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "[" << task << "]";
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) os << "  " << key << "=" << *v;
  };
  put("si_snr_db", si_snr_db);
  put("input_si_snr_db", input_si_snr_db);
  put("lsd", lsd);
  put("input_lsd", input_lsd);
  put("low_band_lsd", low_band_lsd);
  put("mel_mae", mel_mae);
  if (swapped) os << "  swapped=" << (*swapped ? "yes" : "no");
  return os.str();
}

}  // namespace postdiff
