#include "postdiff/operators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "postdiff/error.hpp"
#include "postdiff/kernels.hpp"

namespace postdiff {

namespace {

void check_equal(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw ConfigError(std::string(what) + ": size mismatch (" + std::to_string(a) + " vs " +
                      std::to_string(b) + ")");
}

std::size_t reflect(long i, std::size_t n) {
  const long last = static_cast<long>(n) - 1;
  if (i < 0) return static_cast<std::size_t>(-i);
  if (i > last) return static_cast<std::size_t>(2 * last - i);
  return static_cast<std::size_t>(i);
}

}  // namespace

// ---------------------------------------------------------------- lowpass

LowpassOperator::LowpassOperator(const LowpassSpec& spec)
    : spec_(spec), kernel_(design_lowpass_fir(spec)) {}

std::size_t LowpassOperator::output_size(std::size_t input_size) const {
  if (input_size <= static_cast<std::size_t>(spec_.taps))
    throw ConfigError("lowpass: input of " + std::to_string(input_size) +
                      " samples must be longer than " + std::to_string(spec_.taps) + " taps");
  return input_size;
}

std::vector<double> LowpassOperator::apply(std::span<const double> x) const {
  const std::size_t n = output_size(x.size());
  const std::size_t taps = kernel_.size();
  const long half = static_cast<long>(taps / 2);
  std::vector<double> padded(n + taps - 1);
  for (std::size_t p = 0; p < padded.size(); ++p)
    padded[p] = x[reflect(static_cast<long>(p) - half, n)];
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = kernels::dot(kernel_.data(), padded.data() + i, taps);
  return y;
}

std::vector<double> LowpassOperator::residual_grad(std::span<const double> x,
                                                   std::span<const double> y) const {
  const auto ax = apply(x);
  check_equal(ax.size(), y.size(), "lowpass residual_grad");
  const std::size_t n = x.size();
  const std::size_t taps = kernel_.size();
  const long half = static_cast<long>(taps / 2);
  std::vector<double> padded_grad(n + taps - 1, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    kernels::axpy(ax[i] - y[i], kernel_.data(), padded_grad.data() + i, taps);
  std::vector<double> g(n, 0.0);
  for (std::size_t p = 0; p < padded_grad.size(); ++p)
    g[reflect(static_cast<long>(p) - half, n)] += padded_grad[p];
  return g;
}

// ---------------------------------------------------------------- clip

ClipOperator::ClipOperator(const ClipSpec& spec) : c_(spec.threshold) {
  if (!(c_ > 0.0)) throw ConfigError("clip: threshold must be positive");
}

std::vector<double> ClipOperator::apply(std::span<const double> x) const {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = 0.5 * (std::abs(x[i] + c_) - std::abs(x[i] - c_));
  return y;
}

std::vector<double> ClipOperator::residual_grad(std::span<const double> x,
                                                std::span<const double> y) const {
  check_equal(x.size(), y.size(), "clip residual_grad");
  const auto ax = apply(x);
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = std::abs(x[i]) < c_ ? ax[i] - y[i] : 0.0;
  return g;
}

// ---------------------------------------------------------------- mel

MelOperator::MelOperator(const MelSpec& spec)
    : spec_(spec),
      filterbank_(mel_filterbank(spec.n_mels, spec.n_fft, spec.sample_rate, spec.fmin,
                                 spec.effective_fmax())) {
  validate_stft_config(spec.stft());
  if (!(spec.log_floor > 0.0)) throw ConfigError("mel: log floor must be positive");
}

int MelOperator::frames(std::size_t input_size) const {
  return stft_frame_count(input_size, spec_.stft());
}

std::size_t MelOperator::output_size(std::size_t input_size) const {
  if (input_size < static_cast<std::size_t>(spec_.n_fft))
    throw ConfigError("mel: signal of " + std::to_string(input_size) +
                      " samples is shorter than one frame");
  return static_cast<std::size_t>(spec_.n_mels) * static_cast<std::size_t>(frames(input_size));
}

namespace {

// Filterbank energies M |X| per frame, mel-major.
Matrix mel_energies(const Spectrogram& spec, const Matrix& fb) {
  Matrix e(fb.rows, static_cast<std::size_t>(spec.frames));
  std::vector<double> mag(static_cast<std::size_t>(spec.bins));
  for (int f = 0; f < spec.frames; ++f) {
    const auto frame = spec.frame(f);
    for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(frame[k]);
    for (std::size_t m = 0; m < fb.rows; ++m)
      e(m, static_cast<std::size_t>(f)) = kernels::dot(fb.row(m).data(), mag.data(), mag.size());
  }
  return e;
}

}  // namespace

std::vector<double> MelOperator::apply(std::span<const double> x) const {
  output_size(x.size());
  const auto energies = mel_energies(stft(x, spec_.stft()), filterbank_);
  std::vector<double> out(energies.data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::log(std::max(energies.data[i], spec_.log_floor));
  return out;
}

std::vector<double> MelOperator::residual_grad(std::span<const double> x,
                                               std::span<const double> y) const {
  const std::size_t out_size = output_size(x.size());
  check_equal(out_size, y.size(), "mel residual_grad");
  const auto cfg = spec_.stft();
  const auto spectrum = stft(x, cfg);
  const auto energies = mel_energies(spectrum, filterbank_);

  // d/dP of 1/2 (log max(P, floor) - y)^2; zero where the floor is active.
  Matrix d_energy(energies.rows, energies.cols);
  for (std::size_t i = 0; i < energies.data.size(); ++i) {
    const double p = energies.data[i];
    if (p > spec_.log_floor) d_energy.data[i] = (std::log(p) - y[i]) / p;
  }

  Spectrogram grad;
  grad.bins = spectrum.bins;
  grad.frames = spectrum.frames;
  grad.data.assign(spectrum.data.size(), {0.0, 0.0});
  std::vector<double> d_mag(static_cast<std::size_t>(spectrum.bins));
  for (int f = 0; f < spectrum.frames; ++f) {
    std::fill(d_mag.begin(), d_mag.end(), 0.0);
    for (std::size_t m = 0; m < filterbank_.rows; ++m) {
      const double w = d_energy(m, static_cast<std::size_t>(f));
      if (w != 0.0) kernels::axpy(w, filterbank_.row(m).data(), d_mag.data(), d_mag.size());
    }
    for (int k = 0; k < spectrum.bins; ++k) {
      const auto z = spectrum.at(k, f);
      const double mag = std::abs(z);
      if (mag > 0.0) grad.at(k, f) = d_mag[static_cast<std::size_t>(k)] * z / mag;
    }
  }
  return stft_adjoint(grad, cfg, x.size());
}

// ---------------------------------------------------------------- mix

std::size_t MixOperator::output_size(std::size_t input_size) const {
  if (input_size % 2 != 0) throw ConfigError("mix: input must hold two equal-length sources");
  return input_size / 2;
}

std::vector<double> MixOperator::apply(std::span<const double> x) const {
  const std::size_t n = output_size(x.size());
  return mix_apply(x.first(n), x.subspan(n));
}

std::vector<double> MixOperator::residual_grad(std::span<const double> x,
                                               std::span<const double> y) const {
  const auto ax = apply(x);
  check_equal(ax.size(), y.size(), "mix residual_grad");
  const std::size_t n = ax.size();
  std::vector<double> g(2 * n);
  for (std::size_t i = 0; i < n; ++i) g[i] = g[n + i] = ax[i] - y[i];
  return g;
}

// ---------------------------------------------------------------- matrix

MatrixOperator::MatrixOperator(Eigen::MatrixXd A) : A_(std::move(A)) {}

MatrixOperator MatrixOperator::selection(int dim, std::span<const int> indices) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(indices.size()), dim);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= dim) throw ConfigError("selection: index out of range");
    A(static_cast<Eigen::Index>(r), indices[r]) = 1.0;
  }
  return MatrixOperator(std::move(A));
}

std::size_t MatrixOperator::output_size(std::size_t input_size) const {
  check_equal(input_size, static_cast<std::size_t>(A_.cols()), "matrix operator");
  return static_cast<std::size_t>(A_.rows());
}

std::vector<double> MatrixOperator::apply(std::span<const double> x) const {
  output_size(x.size());
  const Eigen::VectorXd y =
      A_ * Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  return {y.data(), y.data() + y.size()};
}

std::vector<double> MatrixOperator::residual_grad(std::span<const double> x,
                                                  std::span<const double> y) const {
  const auto ax = apply(x);
  check_equal(ax.size(), y.size(), "matrix residual_grad");
  Eigen::VectorXd r(static_cast<Eigen::Index>(ax.size()));
  for (std::size_t i = 0; i < ax.size(); ++i) r[static_cast<Eigen::Index>(i)] = ax[i] - y[i];
  const Eigen::VectorXd g = A_.transpose() * r;
  return {g.data(), g.data() + g.size()};
}

// ---------------------------------------------------------------- free functions

std::vector<double> lowpass_apply(std::span<const double> x, const LowpassSpec& spec) {
  return LowpassOperator(spec).apply(x);
}

std::vector<double> clip_apply(std::span<const double> x, const ClipSpec& spec) {
  return ClipOperator(spec).apply(x);
}

Matrix mel_apply(std::span<const double> x, const MelSpec& spec) {
  const MelOperator op(spec);
  Matrix out(static_cast<std::size_t>(spec.n_mels), static_cast<std::size_t>(op.frames(x.size())));
  out.data = op.apply(x);
  return out;
}

std::vector<double> mix_apply(std::span<const double> x1, std::span<const double> x2) {
  check_equal(x1.size(), x2.size(), "mix");
  std::vector<double> y(x1.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x1[i] + x2[i];
  return y;
}

std::vector<double> residual_grad(const Operator& op, std::span<const double> x,
                                  std::span<const double> y) {
  return op.residual_grad(x, y);
}

double clip_threshold_for_snr(std::span<const double> x, double snr_db) {
  double peak = 0.0, energy = 0.0;
  for (double v : x) {
    peak = std::max(peak, std::abs(v));
    energy += v * v;
  }
  if (!(peak > 0.0)) throw ConfigError("clip_threshold_for_snr: silent signal");
  auto snr_at = [&](double c) {
    double err = 0.0;
    for (double v : x) {
      const double d = v - std::clamp(v, -c, c);
      err += d * d;
    }
    return err > 0.0 ? 10.0 * std::log10(energy / err) : 1e9;
  };
  double lo = 0.0, hi = peak;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (snr_at(mid) < snr_db) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace postdiff
