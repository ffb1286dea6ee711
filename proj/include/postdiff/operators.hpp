#pragma once

// Degradation operators y = A(x). Each exposes the forward map and the exact
// gradient of 1/2 ||y - A(x)||^2 with respect to x, i.e. J^T (A(x) - y).

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "postdiff/signal.hpp"

namespace postdiff {

class Operator {
 public:
  virtual ~Operator() = default;
  virtual std::string_view name() const = 0;
  /// Throws ConfigError if the operator cannot take inputs of this size.
  virtual std::size_t output_size(std::size_t input_size) const = 0;
  virtual std::vector<double> apply(std::span<const double> x) const = 0;
  virtual std::vector<double> residual_grad(std::span<const double> x,
                                            std::span<const double> y) const = 0;
};

/// Linear-phase windowed-sinc lowpass, reflect-padded and delay-compensated so
/// the output aligns sample-for-sample with the input.
class LowpassOperator final : public Operator {
 public:
  explicit LowpassOperator(const LowpassSpec& spec);
  std::string_view name() const override { return "lowpass"; }
  std::size_t output_size(std::size_t input_size) const override;
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> residual_grad(std::span<const double> x,
                                    std::span<const double> y) const override;
  const LowpassSpec& spec() const { return spec_; }
  std::span<const double> kernel() const { return kernel_; }

 private:
  LowpassSpec spec_;
  std::vector<double> kernel_;
};

struct ClipSpec {
  double threshold = 0.25;
};

/// Hard clipping 1/2 (|x + c| - |x - c|). The subgradient is zero on |x| >= c.
class ClipOperator final : public Operator {
 public:
  explicit ClipOperator(const ClipSpec& spec);
  std::string_view name() const override { return "clip"; }
  std::size_t output_size(std::size_t input_size) const override { return input_size; }
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> residual_grad(std::span<const double> x,
                                    std::span<const double> y) const override;
  double threshold() const { return c_; }

 private:
  double c_;
};

struct MelSpec {
  int n_fft = 1024;
  int hop = 256;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 0.0;  // <= 0 selects sample_rate / 2
  double log_floor = 1e-5;
  double sample_rate = 16000.0;

  double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
  StftConfig stft() const { return {n_fft, hop, true}; }
};

/// log(max(M |STFT(x)|, floor)), flattened n_mels x frames (mel-major).
class MelOperator final : public Operator {
 public:
  explicit MelOperator(const MelSpec& spec);
  std::string_view name() const override { return "mel"; }
  std::size_t output_size(std::size_t input_size) const override;
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> residual_grad(std::span<const double> x,
                                    std::span<const double> y) const override;
  const MelSpec& spec() const { return spec_; }
  const Matrix& filterbank() const { return filterbank_; }
  int frames(std::size_t input_size) const;

 private:
  MelSpec spec_;
  Matrix filterbank_;
};

/// Two-source mixture: input is the concatenation [x1; x2], output x1 + x2.
class MixOperator final : public Operator {
 public:
  std::string_view name() const override { return "mix"; }
  std::size_t output_size(std::size_t input_size) const override;
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> residual_grad(std::span<const double> x,
                                    std::span<const double> y) const override;
};

/// Dense linear operator y = A x (oracle experiments, coordinate selection).
class MatrixOperator final : public Operator {
 public:
  explicit MatrixOperator(Eigen::MatrixXd A);
  /// Rows of the identity picking `indices` out of a length-`dim` vector.
  static MatrixOperator selection(int dim, std::span<const int> indices);
  std::string_view name() const override { return "matrix"; }
  std::size_t output_size(std::size_t input_size) const override;
  std::vector<double> apply(std::span<const double> x) const override;
  std::vector<double> residual_grad(std::span<const double> x,
                                    std::span<const double> y) const override;
  const Eigen::MatrixXd& matrix() const { return A_; }

 private:
  Eigen::MatrixXd A_;
};

std::vector<double> lowpass_apply(std::span<const double> x, const LowpassSpec& spec);
std::vector<double> clip_apply(std::span<const double> x, const ClipSpec& spec);
Matrix mel_apply(std::span<const double> x, const MelSpec& spec);
std::vector<double> mix_apply(std::span<const double> x1, std::span<const double> x2);

std::vector<double> residual_grad(const Operator& op, std::span<const double> x,
                                  std::span<const double> y);

/// Clip threshold c such that the clipped signal has the requested SNR
/// against the clean one (bisection; SNR is monotone in c).
double clip_threshold_for_snr(std::span<const double> x, double snr_db);

}  // namespace postdiff
