#include "postdiff/signal.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

constexpr double kPi = std::numbers::pi;

template <class T>
struct FftwDeleter {
  void operator()(T* p) const { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter<T>>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

// Plans are created once per size under a lock; fftw_execute_dft_* with
// fftw_malloc'd buffers is thread-safe.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    auto in = fftw_alloc<double>(static_cast<std::size_t>(n));
    auto out = fftw_alloc<fftw_complex>(static_cast<std::size_t>(n / 2 + 1));
    forward_ = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_1d(n, out.get(), in.get(), FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
  // Destroys the contents of `in`.
  void backward(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(backward_, in, out); }

 private:
  int n_;
  fftw_plan forward_;
  fftw_plan backward_;
};

const RealFft& real_fft(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<RealFft>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

std::size_t pad_of(const StftConfig& cfg) {
  return cfg.center ? static_cast<std::size_t>(cfg.n_fft / 2) : 0;
}

// Maps a padded index onto the original signal (reflect, no edge repeat).
// Returns -1 for zero-extension past the end.
long source_index(long p, std::size_t pad, std::size_t length) {
  const long n = static_cast<long>(length);
  long i = p - static_cast<long>(pad);
  if (i < 0) return -i;
  if (i < n) return i;
  if (pad > 0 && i < n + static_cast<long>(pad)) return 2 * (n - 1) - i;
  return -1;
}

std::size_t padded_length(std::size_t length, const StftConfig& cfg) {
  const int frames = stft_frame_count(length, cfg);
  return static_cast<std::size_t>(frames - 1) * static_cast<std::size_t>(cfg.hop) +
         static_cast<std::size_t>(cfg.n_fft);
}

void check_length(std::size_t length, const StftConfig& cfg) {
  if (cfg.center) {
    if (length <= static_cast<std::size_t>(cfg.n_fft / 2))
      throw ConfigError("stft: signal of " + std::to_string(length) +
                        " samples too short for reflect padding of " +
                        std::to_string(cfg.n_fft / 2));
  } else if (length < static_cast<std::size_t>(cfg.n_fft)) {
    throw ConfigError("stft: signal shorter than one frame");
  }
}

}  // namespace

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

void validate_stft_config(const StftConfig& cfg) {
  if (cfg.n_fft < 2 || cfg.n_fft % 2 != 0) throw ConfigError("stft: n_fft must be even and >= 2");
  if (cfg.hop <= 0 || cfg.hop > cfg.n_fft) throw ConfigError("stft: require 0 < hop <= n_fft");
}

int stft_frame_count(std::size_t length, const StftConfig& cfg) {
  const auto hop = static_cast<std::size_t>(cfg.hop);
  if (cfg.center) return 1 + static_cast<int>((length + hop - 1) / hop);
  if (length < static_cast<std::size_t>(cfg.n_fft)) return 0;
  return 1 + static_cast<int>((length - static_cast<std::size_t>(cfg.n_fft)) / hop);
}

bool satisfies_cola(const StftConfig& cfg) {
  if (cfg.n_fft % cfg.hop != 0) return false;
  const auto w = hann_window(cfg.n_fft);
  double first = 0.0;
  for (int i = 0; i < cfg.hop; ++i) {
    double sum = 0.0;
    for (int j = i; j < cfg.n_fft; j += cfg.hop) sum += w[static_cast<std::size_t>(j)] * w[static_cast<std::size_t>(j)];
    if (i == 0) first = sum;
    if (std::abs(sum - first) > 1e-10 * first) return false;
  }
  return true;
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg) {
  validate_stft_config(cfg);
  check_length(x.size(), cfg);
  const std::size_t pad = pad_of(cfg);
  const std::size_t total = padded_length(x.size(), cfg);
  std::vector<double> padded(total);
  for (std::size_t p = 0; p < total; ++p) {
    const long s = source_index(static_cast<long>(p), pad, x.size());
    padded[p] = s < 0 ? 0.0 : x[static_cast<std::size_t>(s)];
  }

  const auto window = hann_window(cfg.n_fft);
  const auto& fft = real_fft(cfg.n_fft);
  const auto n = static_cast<std::size_t>(cfg.n_fft);
  auto in = fftw_alloc<double>(n);
  auto out = fftw_alloc<fftw_complex>(static_cast<std::size_t>(cfg.bins()));

  Spectrogram spec;
  spec.bins = cfg.bins();
  spec.frames = stft_frame_count(x.size(), cfg);
  spec.data.resize(static_cast<std::size_t>(spec.bins) * static_cast<std::size_t>(spec.frames));
  for (int f = 0; f < spec.frames; ++f) {
    const double* src = padded.data() + static_cast<std::size_t>(f) * static_cast<std::size_t>(cfg.hop);
    for (std::size_t i = 0; i < n; ++i) in[i] = src[i] * window[i];
    fft.forward(in.get(), out.get());
    for (int k = 0; k < spec.bins; ++k) spec.at(k, f) = {out[k][0], out[k][1]};
  }
  return spec;
}

namespace {

// Overlap-adds real frames produced by c2r on `scaled` spectra, weighted by
// the analysis window. Returns the padded-domain buffer.
std::vector<double> overlap_add(const Spectrogram& spec, const StftConfig& cfg,
                                std::size_t total, bool halve_interior) {
  const auto window = hann_window(cfg.n_fft);
  const auto& fft = real_fft(cfg.n_fft);
  const auto n = static_cast<std::size_t>(cfg.n_fft);
  auto in = fftw_alloc<fftw_complex>(static_cast<std::size_t>(spec.bins));
  auto out = fftw_alloc<double>(n);
  std::vector<double> buffer(total, 0.0);
  const double scale = halve_interior ? 1.0 : 1.0 / static_cast<double>(n);
  for (int f = 0; f < spec.frames; ++f) {
    for (int k = 0; k < spec.bins; ++k) {
      double s = scale;
      if (halve_interior && k > 0 && k < spec.bins - 1) s = 0.5;
      in[k][0] = spec.at(k, f).real() * s;
      in[k][1] = spec.at(k, f).imag() * s;
    }
    fft.backward(in.get(), out.get());
    double* dst = buffer.data() + static_cast<std::size_t>(f) * static_cast<std::size_t>(cfg.hop);
    for (std::size_t i = 0; i < n; ++i) dst[i] += out[i] * window[i];
  }
  return buffer;
}

void check_spectrogram(const Spectrogram& spec, const StftConfig& cfg, std::size_t length) {
  validate_stft_config(cfg);
  if (spec.bins != cfg.bins()) throw ConfigError("istft: bin count does not match n_fft");
  if (spec.frames != stft_frame_count(length, cfg))
    throw ConfigError("istft: frame count does not match requested length");
  check_length(length, cfg);
}

}  // namespace

std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg, std::size_t length) {
  check_spectrogram(spec, cfg, length);
  if (!satisfies_cola(cfg))
    throw ConfigError("istft: squared Hann window does not overlap-add to a constant at hop " +
                      std::to_string(cfg.hop));
  const std::size_t total = padded_length(length, cfg);
  auto buffer = overlap_add(spec, cfg, total, false);

  const auto window = hann_window(cfg.n_fft);
  std::vector<double> envelope(total, 0.0);
  for (int f = 0; f < spec.frames; ++f)
    for (std::size_t i = 0; i < window.size(); ++i)
      envelope[static_cast<std::size_t>(f) * static_cast<std::size_t>(cfg.hop) + i] += window[i] * window[i];

  const std::size_t pad = pad_of(cfg);
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double e = envelope[i + pad];
    out[i] = e > 1e-12 ? buffer[i + pad] / e : 0.0;
  }
  return out;
}

std::vector<double> stft_adjoint(const Spectrogram& grad, const StftConfig& cfg,
                                 std::size_t length) {
  check_spectrogram(grad, cfg, length);
  const std::size_t total = padded_length(length, cfg);
  const auto buffer = overlap_add(grad, cfg, total, true);
  const std::size_t pad = pad_of(cfg);
  std::vector<double> out(length, 0.0);
  for (std::size_t p = 0; p < total; ++p) {
    const long s = source_index(static_cast<long>(p), pad, length);
    if (s >= 0) out[static_cast<std::size_t>(s)] += buffer[p];
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int n_mels, int n_fft, double sample_rate, double fmin, double fmax) {
  if (n_mels < 1) throw ConfigError("mel: n_mels must be positive");
  if (n_fft < 2) throw ConfigError("mel: n_fft must be >= 2");
  if (!(fmin >= 0.0) || !(fmin < fmax) || fmax > sample_rate / 2.0)
    throw ConfigError("mel: require 0 <= fmin < fmax <= sample_rate / 2");
  const int bins = n_fft / 2 + 1;
  const double lo = hz_to_mel(fmin);
  const double hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels + 2));
  for (int i = 0; i < n_mels + 2; ++i)
    edges[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));

  Matrix fb(static_cast<std::size_t>(n_mels), static_cast<std::size_t>(bins));
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = k * sample_rate / n_fft;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      fb(static_cast<std::size_t>(m), static_cast<std::size_t>(k)) = std::max(0.0, std::min(up, down));
    }
  }
  return fb;
}

void validate_lowpass(const LowpassSpec& spec) {
  if (!(spec.sample_rate_hz > 0.0)) throw ConfigError("lowpass: sample rate must be positive");
  if (!(spec.cutoff_hz > 0.0) || !(spec.cutoff_hz < spec.sample_rate_hz / 2.0))
    throw ConfigError("lowpass: cutoff must lie in (0, sample_rate / 2)");
  if (spec.taps < 1 || spec.taps % 2 == 0) throw ConfigError("lowpass: taps must be odd");
}

std::vector<double> design_lowpass_fir(const LowpassSpec& spec) {
  validate_lowpass(spec);
  const int n = spec.taps;
  const double fc = spec.cutoff_hz / spec.sample_rate_hz;
  const int center = (n - 1) / 2;
  std::vector<double> k(static_cast<std::size_t>(n));
  for (int i = 0; i <= center; ++i) {
    const int m = i - center;
    const double sinc = m == 0 ? 2.0 * fc : std::sin(2.0 * kPi * fc * m) / (kPi * m);
    // Symmetric Hann spanning the taps, with nonzero end points.
    const double w = 0.5 - 0.5 * std::cos(2.0 * kPi * (i + 1) / (n + 1));
    k[static_cast<std::size_t>(i)] = sinc * w;
    k[static_cast<std::size_t>(n - 1 - i)] = sinc * w;
  }
  double sum = 0.0;
  for (double v : k) sum += v;
  for (double& v : k) v /= sum;
  return k;
}

double fir_magnitude_response(std::span<const double> kernel, double freq_hz, double sample_rate) {
  std::complex<double> h = 0.0;
  for (std::size_t i = 0; i < kernel.size(); ++i)
    h += kernel[i] * std::polar(1.0, -2.0 * kPi * freq_hz / sample_rate * static_cast<double>(i));
  return std::abs(h);
}

}  // namespace postdiff
