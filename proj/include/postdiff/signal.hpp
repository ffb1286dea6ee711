#pragma once

// Shared DSP primitives: real FFT framing (STFT / inverse / adjoint), Hann
// windows, HTK mel filterbanks and windowed-sinc FIR design.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace postdiff {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

/// Hann window, periodic; hop = n_fft / 4 gives exact squared-window overlap-add.
struct StftConfig {
  int n_fft = 1024;
  int hop = 256;
  bool center = true;  // reflect-pad n_fft / 2 at both ends

  int bins() const { return n_fft / 2 + 1; }
};

/// Complex spectrogram stored frame-major: value(bin, frame) = data[frame * bins + bin].
struct Spectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(int bin, int frame) {
    return data[static_cast<std::size_t>(frame) * static_cast<std::size_t>(bins) +
                static_cast<std::size_t>(bin)];
  }
  const std::complex<double>& at(int bin, int frame) const {
    return data[static_cast<std::size_t>(frame) * static_cast<std::size_t>(bins) +
                static_cast<std::size_t>(bin)];
  }
  std::span<const std::complex<double>> frame(int f) const {
    return {data.data() + static_cast<std::size_t>(f) * static_cast<std::size_t>(bins),
            static_cast<std::size_t>(bins)};
  }
};

std::vector<double> hann_window(int n);

/// Throws ConfigError on n_fft < 2, odd n_fft, hop <= 0 or hop > n_fft.
void validate_stft_config(const StftConfig& cfg);

/// Number of frames produced for a signal of `length` samples. With centering
/// this is 1 + ceil(length / hop); the tail is zero-extended to fill the last hop.
int stft_frame_count(std::size_t length, const StftConfig& cfg);

Spectrogram stft(std::span<const double> x, const StftConfig& cfg);

/// Windowed overlap-add with squared-window normalization. Rejects
/// configurations whose squared window does not overlap-add to a constant.
std::vector<double> istft(const Spectrogram& spec, const StftConfig& cfg, std::size_t length);

/// Adjoint of the real-linear map x -> stft(x): returns the gradient of
/// sum Re(conj(G) * stft(x)) with respect to x.
std::vector<double> stft_adjoint(const Spectrogram& grad, const StftConfig& cfg,
                                 std::size_t length);

/// True if the squared window overlap-adds to a constant at this hop.
bool satisfies_cola(const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// HTK triangular filterbank, n_mels x (n_fft / 2 + 1), unit peak.
Matrix mel_filterbank(int n_mels, int n_fft, double sample_rate, double fmin, double fmax);

struct LowpassSpec {
  double cutoff_hz = 2000.0;
  double sample_rate_hz = 16000.0;
  int taps = 129;
};

void validate_lowpass(const LowpassSpec& spec);

/// Hann-windowed sinc, symmetric, normalized to unit DC gain.
std::vector<double> design_lowpass_fir(const LowpassSpec& spec);

/// Magnitude response |H(f)| of an FIR kernel, evaluated directly.
double fir_magnitude_response(std::span<const double> kernel, double freq_hz, double sample_rate);

}  // namespace postdiff
