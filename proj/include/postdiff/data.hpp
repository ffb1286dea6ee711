#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "postdiff/gaussian.hpp"
#include "postdiff/signal.hpp"

namespace postdiff {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

// ------------------------------------------------------------ generators

struct ToyHarmonicConfig {
  int sample_rate = 16000;
  double duration = 0.5;  // seconds
  double f0_min = 80.0;
  double f0_max = 300.0;
  int max_harmonics = 5;  // each clip draws K uniformly from 1..max_harmonics
  double noise_floor = 0.01;
  double peak = 0.95;
  std::uint64_t seed = 0;

  std::size_t length() const;
};

void validate(const ToyHarmonicConfig& cfg);

/// Hann-enveloped harmonic stacks sum_k (1/k) sin(2 pi k f0 t + phi_k), peak
/// normalized, plus white noise. Clip i depends only on (seed, i).
std::vector<std::vector<double>> gen_toy_harmonic(const ToyHarmonicConfig& cfg, std::size_t n);

/// Parameters drawn for clip i (exposed for verification).
struct ToyHarmonicDraw {
  double f0 = 0.0;
  int harmonics = 0;
};
ToyHarmonicDraw toy_harmonic_draw(const ToyHarmonicConfig& cfg, std::size_t index);

struct Ar1Config {
  double rho = 0.9;
  int dim = 32;
  std::uint64_t seed = 0;
};

struct Ar1Dataset {
  std::vector<std::vector<double>> samples;
  GaussianPrior prior;  // zero mean, Toeplitz covariance rho^|i-j|
};

/// Stationary unit-variance AR(1) vectors and their exact Gaussian prior.
Ar1Dataset gen_ar1(const Ar1Config& cfg, std::size_t n);
GaussianPrior ar1_prior(double rho, int dim);

// ------------------------------------------------------------ mixtures

struct MixtureRecord {
  double gain1 = 1.0;  // applied to x1 before summing
  double gain2 = 1.0;
};

struct Mixture {
  std::vector<double> y;
  std::vector<double> x1;  // normalized sources
  std::vector<double> x2;
  MixtureRecord record;
};

/// Peak-normalizes each source to `peak` and sums them without weights.
Mixture make_mixture(std::span<const double> x1, std::span<const double> x2, double peak = 0.95);

double peak_abs(std::span<const double> x);

// ------------------------------------------------------------ file I/O

/// RIFF/WAVE, PCM 16-bit, mono. Throws FormatError on anything else.
Waveform wav_read(const std::filesystem::path& path);
/// Round-to-nearest quantization, saturating at [-32768, 32767].
void wav_write(const std::filesystem::path& path, const Waveform& wav);

/// Little-endian float32 tensor: "PDTN" magic, u32 rank, u32 dims, data.
void tensor_write(const std::filesystem::path& path, const Matrix& m);
Matrix tensor_read(const std::filesystem::path& path);

}  // namespace postdiff
