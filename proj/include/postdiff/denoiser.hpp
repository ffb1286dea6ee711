#pragma once

// Miniature time-domain dilated residual denoiser predicting eps_hat(x_t, t).
//
//   x --1x1--> ReLU --> [block]*B --skip sum / sqrt(B)--> 1x1 --> ReLU --> 1x1 --> eps_hat
//   block: u = h + proj(e); v = dilated_conv3(u); g = tanh(v_a) * sigmoid(v_b)
//          o = 1x1(g); h' = (h + o_res) / sqrt(2); skip += o_skip
//   e = SiLU(W [sin(2 pi f beta), cos(2 pi f beta)] + b)  (random Fourier features of beta(t))
//
// Convolutions use zero "same" padding, so the network is length preserving.
// Gradients are hand-derived for this fixed architecture.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "postdiff/schedule.hpp"
#include "postdiff/score_model.hpp"

namespace postdiff {

struct DenoiserArch {
  int channels = 32;
  int blocks = 8;
  int fourier_features = 16;  // number of frequencies; embedding has 2x this many entries
  double fourier_sigma = 50.0;  // std of frequencies, in cycles per unit beta
  std::vector<int> dilation_cycle = {1, 2, 4, 8};

  bool operator==(const DenoiserArch&) const = default;
  int dilation(int block) const {
    return dilation_cycle[static_cast<std::size_t>(block) % dilation_cycle.size()];
  }
  /// 1 + sum over blocks of 2 * dilation (kernel width 3).
  int receptive_field() const;
};

void validate(const DenoiserArch& arch);

/// Offsets of each tensor inside the flat parameter vector.
struct DenoiserLayout {
  struct Block {
    std::size_t t_w, t_b, dil_w, dil_b, out_w, out_b;
  };
  std::size_t emb_w, emb_b, in_w, in_b;
  std::vector<Block> blocks;
  std::size_t skip_w, skip_b, final_w, final_b;
  std::size_t total;

  explicit DenoiserLayout(const DenoiserArch& arch);
};

/// Stateless forward/backward over a flat parameter vector of type T.
template <class T>
class DenoiserNetwork {
 public:
  struct Workspace {
    std::size_t length = 0;
    std::vector<T> phi, pre_emb, emb;
    std::vector<T> in_pre;                 // C x L
    std::vector<std::vector<T>> h;         // B + 1 of C x L
    std::vector<std::vector<T>> u, th, sg, g;  // B of C x L
    std::vector<T> skip, z_pre, z, out;    // C x L, C x L, C x L, L
    // scratch
    std::vector<T> v, o;
  };

  DenoiserNetwork(const DenoiserArch& arch, std::span<const double> fourier_frequencies);

  const DenoiserArch& arch() const { return arch_; }
  const DenoiserLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total; }

  /// Fills ws (activations kept for backward); output in ws.out.
  void forward(std::span<const T> params, std::span<const T> x, double beta, Workspace& ws) const;

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(out).
  void backward(std::span<const T> params, std::span<const T> x, const Workspace& ws,
                std::span<const T> d_out, std::span<T> grad) const;

 private:
  DenoiserArch arch_;
  DenoiserLayout layout_;
  std::vector<double> freqs_;
};

extern template class DenoiserNetwork<float>;
extern template class DenoiserNetwork<double>;

/// Trainable toy denoiser bound to its noise schedule (beta(t) is the
/// conditioning input). Parameters are stored in single precision.
class ToyDenoiser final : public ScoreModel {
 public:
  /// Random initialization; the output projection starts at zero.
  ToyDenoiser(DenoiserArch arch, NoiseSchedule sched, std::uint64_t seed);
  ToyDenoiser(DenoiserArch arch, NoiseSchedule sched, std::vector<double> fourier_frequencies,
              std::vector<float> params);

  const DenoiserArch& arch() const { return arch_; }
  const NoiseSchedule& schedule() const { return sched_; }
  std::span<const double> fourier_frequencies() const { return freqs_; }
  std::span<const float> params() const { return params_; }
  std::span<float> mutable_params() { return params_; }
  std::size_t param_count() const { return params_.size(); }
  int receptive_field() const { return arch_.receptive_field(); }

  const DenoiserNetwork<float>& network() const { return net_; }
  DenoiserNetwork<double> network_f64() const { return {arch_, freqs_}; }
  std::vector<double> params_f64() const { return {params_.begin(), params_.end()}; }

  /// Single-precision forward; throws NumericError on non-finite input or params.
  std::vector<double> predict_eps(std::span<const double> x_t, int t) const override;

  /// Same forward evaluated in double precision with `params` (e.g. perturbed copies).
  std::vector<double> predict_eps_f64(std::span<const double> params, std::span<const double> x_t,
                                      int t) const;

 private:
  struct InitState {
    std::vector<double> freqs;
    std::vector<float> params;
  };
  static InitState random_init(const DenoiserArch& arch, std::uint64_t seed);
  ToyDenoiser(DenoiserArch arch, NoiseSchedule sched, InitState init);

  DenoiserArch arch_;
  NoiseSchedule sched_;
  std::vector<double> freqs_;
  std::vector<float> params_;
  DenoiserNetwork<float> net_;
};

/// One element of a denoising minibatch: x_t = sqrt(ab) x0 + sqrt(1-ab) eps.
struct DenoisingExample {
  std::vector<double> x0;
  std::vector<double> eps;
  int t = 1;
};

/// Mean squared error between eps_hat and eps over all samples of the batch
/// (lambda(t) = 1). Accumulates the gradient into `grad` when non-null.
template <class T>
double denoising_loss(const DenoiserNetwork<T>& net, std::span<const T> params,
                      std::span<const DenoisingExample> batch, const NoiseSchedule& sched,
                      std::vector<T>* grad);

extern template double denoising_loss<float>(const DenoiserNetwork<float>&, std::span<const float>,
                                             std::span<const DenoisingExample>,
                                             const NoiseSchedule&, std::vector<float>*);
extern template double denoising_loss<double>(const DenoiserNetwork<double>&,
                                              std::span<const double>,
                                              std::span<const DenoisingExample>,
                                              const NoiseSchedule&, std::vector<double>*);

struct TrainConfig {
  double learning_rate = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 8;
  int segment_length = 8000;
  int epochs = 1;
  int max_steps = 0;  // > 0: run exactly this many steps, cycling epochs as needed
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> loss_history;  // one entry per optimizer step
};

/// Denoising score matching with uniform t in {1..T} and Adam. An epoch visits
/// every clip once (random crop of segment_length) in seeded shuffled order.
/// Throws NumericError if the loss becomes non-finite.
TrainResult train_denoiser(ToyDenoiser& model, std::span<const std::vector<double>> dataset,
                           const NoiseSchedule& sched, const TrainConfig& cfg,
                           const std::function<void(int, double)>& on_step = {});

/// Mean of the first and last `window` entries of a loss history.
std::pair<double, double> smoothed_loss_endpoints(std::span<const double> history, std::size_t window);

// Checkpoint container: "PDCKPT01", u64 header size, JSON header (architecture,
// schedule, Fourier frequencies, parameter count), then little-endian float32
// parameters.
void save_checkpoint(const std::filesystem::path& path, const ToyDenoiser& model);
ToyDenoiser load_checkpoint(const std::filesystem::path& path);

}  // namespace postdiff
