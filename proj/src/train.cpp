#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "postdiff/denoiser.hpp"
#include "postdiff/error.hpp"

namespace postdiff {

template <class T>
double denoising_loss(const DenoiserNetwork<T>& net, std::span<const T> params,
                      std::span<const DenoisingExample> batch, const NoiseSchedule& sched,
                      std::vector<T>* grad) {
  if (batch.empty()) throw ConfigError("denoising_loss: empty batch");
  std::size_t total = 0;
  for (const auto& ex : batch) {
    if (ex.x0.size() != ex.eps.size()) throw ConfigError("denoising_loss: x0/eps length mismatch");
    total += ex.x0.size();
  }
  if (grad) grad->assign(net.param_count(), T(0));

  typename DenoiserNetwork<T>::Workspace ws;
  std::vector<T> x_t, d_out;
  double sum = 0.0;
  for (const auto& ex : batch) {
    const auto noised = forward_noise(ex.x0, ex.t, ex.eps, sched);
    x_t.assign(noised.begin(), noised.end());
    net.forward(params, x_t, sched.beta(ex.t), ws);
    const std::size_t L = x_t.size();
    d_out.resize(L);
    for (std::size_t i = 0; i < L; ++i) {
      const double r = static_cast<double>(ws.out[i]) - ex.eps[i];
      sum += r * r;
      d_out[i] = static_cast<T>(2.0 * r / static_cast<double>(total));
    }
    if (grad) net.backward(params, x_t, ws, d_out, *grad);
  }
  return sum / static_cast<double>(total);
}

template double denoising_loss<float>(const DenoiserNetwork<float>&, std::span<const float>,
                                      std::span<const DenoisingExample>, const NoiseSchedule&,
                                      std::vector<float>*);
template double denoising_loss<double>(const DenoiserNetwork<double>&, std::span<const double>,
                                       std::span<const DenoisingExample>, const NoiseSchedule&,
                                       std::vector<double>*);

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(cfg.adam_beta1 > 0.0 && cfg.adam_beta1 < 1.0) ||
      !(cfg.adam_beta2 > 0.0 && cfg.adam_beta2 < 1.0))
    throw ConfigError("train: Adam betas must lie in (0, 1)");
  if (!(cfg.adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (cfg.batch_size < 1) throw ConfigError("train: batch_size must be positive");
  if (cfg.segment_length < 1) throw ConfigError("train: segment_length must be positive");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be positive");
  if (cfg.max_steps < 0) throw ConfigError("train: max_steps must be non-negative");
}

TrainResult train_denoiser(ToyDenoiser& model, std::span<const std::vector<double>> dataset,
                           const NoiseSchedule& sched, const TrainConfig& cfg,
                           const std::function<void(int, double)>& on_step) {
  validate(cfg);
  if (!(sched == model.schedule()))
    throw ConfigError("train: schedule differs from the one the model was built with");
  if (dataset.empty()) throw ConfigError("train: empty dataset");
  const auto seg = static_cast<std::size_t>(cfg.segment_length);
  if (cfg.segment_length < model.receptive_field())
    throw ConfigError("train: segment_length is shorter than the receptive field");
  for (const auto& clip : dataset)
    if (clip.size() < seg)
      throw ConfigError("train: clip of " + std::to_string(clip.size()) +
                        " samples is shorter than segment_length " + std::to_string(seg));

  const auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (dataset.size() + batch_size - 1) / batch_size;
  const std::size_t total_steps = cfg.max_steps > 0
                                      ? static_cast<std::size_t>(cfg.max_steps)
                                      : steps_per_epoch * static_cast<std::size_t>(cfg.epochs);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> step_dist(1, sched.steps());

  const auto& net = model.network();
  auto params = model.mutable_params();
  const std::size_t P = params.size();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  std::vector<float> grad;
  std::vector<std::size_t> order(dataset.size());
  std::vector<DenoisingExample> batch;

  TrainResult result;
  result.loss_history.reserve(total_steps);
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < total_steps; ++step) {
    batch.clear();
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        if (b > 0) break;  // epoch boundary closes a partial batch
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto& clip = dataset[order[cursor++]];
      std::uniform_int_distribution<std::size_t> start_dist(0, clip.size() - seg);
      const std::size_t start = start_dist(rng);
      DenoisingExample ex;
      ex.x0.assign(clip.begin() + static_cast<long>(start),
                   clip.begin() + static_cast<long>(start + seg));
      ex.t = step_dist(rng);
      ex.eps.resize(seg);
      for (auto& e : ex.eps) e = normal(rng);
      batch.push_back(std::move(ex));
    }

    const double loss =
        denoising_loss<float>(net, std::span<const float>(params), batch, sched, &grad);
    if (!std::isfinite(loss))
      throw NumericError("train: loss became non-finite at step " + std::to_string(step + 1));

    const double t1 = static_cast<double>(step + 1);
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t1);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t1);
    for (std::size_t i = 0; i < P; ++i) {
      const double g = grad[i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double update = cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
      params[i] = static_cast<float>(params[i] - update);
    }
    result.loss_history.push_back(loss);
    if (on_step) on_step(static_cast<int>(step + 1), loss);
  }
  return result;
}

std::pair<double, double> smoothed_loss_endpoints(std::span<const double> history,
                                                  std::size_t window) {
  if (history.empty()) throw ConfigError("smoothed_loss_endpoints: empty history");
  const std::size_t w = std::clamp<std::size_t>(window, 1, history.size());
  const double head = std::accumulate(history.begin(), history.begin() + static_cast<long>(w), 0.0);
  const double tail = std::accumulate(history.end() - static_cast<long>(w), history.end(), 0.0);
  return {head / static_cast<double>(w), tail / static_cast<double>(w)};
}

}  // namespace postdiff
