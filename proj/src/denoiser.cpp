#include "postdiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "postdiff/error.hpp"
#include "postdiff/kernels.hpp"

namespace postdiff {

int DenoiserArch::receptive_field() const {
  int rf = 1;
  for (int b = 0; b < blocks; ++b) rf += 2 * dilation(b);
  return rf;
}

void validate(const DenoiserArch& arch) {
  if (arch.channels < 1 || arch.blocks < 1 || arch.fourier_features < 1)
    throw ConfigError("denoiser: channels, blocks and fourier_features must be positive");
  if (arch.dilation_cycle.empty()) throw ConfigError("denoiser: empty dilation cycle");
  for (int d : arch.dilation_cycle)
    if (d < 1) throw ConfigError("denoiser: dilations must be positive");
  if (!(arch.fourier_sigma > 0.0)) throw ConfigError("denoiser: fourier_sigma must be positive");
}

DenoiserLayout::DenoiserLayout(const DenoiserArch& arch) {
  const auto C = static_cast<std::size_t>(arch.channels);
  const auto F2 = 2 * static_cast<std::size_t>(arch.fourier_features);
  std::size_t at = 0;
  auto take = [&at](std::size_t n) {
    const std::size_t o = at;
    at += n;
    return o;
  };
  emb_w = take(C * F2);
  emb_b = take(C);
  in_w = take(C);
  in_b = take(C);
  for (int b = 0; b < arch.blocks; ++b) {
    Block blk{};
    blk.t_w = take(C * C);
    blk.t_b = take(C);
    blk.dil_w = take(3 * 2 * C * C);
    blk.dil_b = take(2 * C);
    blk.out_w = take(2 * C * C);
    blk.out_b = take(2 * C);
    blocks.push_back(blk);
  }
  skip_w = take(C * C);
  skip_b = take(C);
  final_w = take(C);
  final_b = take(1);
  total = at;
}

namespace {

template <class T>
void transpose(const T* src, std::size_t rows, std::size_t cols, std::vector<T>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <class T>
void fill_rows(T* dst, const T* bias, std::size_t rows, std::size_t len) {
  for (std::size_t r = 0; r < rows; ++r) std::fill(dst + r * len, dst + (r + 1) * len, bias[r]);
}

template <class T>
T row_sum(const T* x, std::size_t len) {
  T s = 0;
  for (std::size_t i = 0; i < len; ++i) s += x[i];
  return s;
}

// Valid output range [lo, hi) for a tap reading x[l + shift].
std::pair<std::size_t, std::size_t> tap_range(long shift, std::size_t len) {
  const long L = static_cast<long>(len);
  const long lo = std::max(0L, -shift);
  const long hi = std::min(L, L - shift);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <class T>
T silu(T x) { return x / (T(1) + std::exp(-x)); }

template <class T>
T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

}  // namespace

template <class T>
DenoiserNetwork<T>::DenoiserNetwork(const DenoiserArch& arch,
                                    std::span<const double> fourier_frequencies)
    : arch_(arch), layout_(arch), freqs_(fourier_frequencies.begin(), fourier_frequencies.end()) {
  validate(arch_);
  if (freqs_.size() != static_cast<std::size_t>(arch_.fourier_features))
    throw ConfigError("denoiser: expected " + std::to_string(arch_.fourier_features) +
                      " Fourier frequencies, got " + std::to_string(freqs_.size()));
}

template <class T>
void DenoiserNetwork<T>::forward(std::span<const T> params, std::span<const T> x, double beta,
                                 Workspace& ws) const {
  if (params.size() != layout_.total) throw ConfigError("denoiser: wrong parameter count");
  const auto C = static_cast<std::size_t>(arch_.channels);
  const auto B = static_cast<std::size_t>(arch_.blocks);
  const auto F = freqs_.size();
  const std::size_t L = x.size();
  const T* P = params.data();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));

  ws.length = L;
  ws.phi.resize(2 * F);
  for (std::size_t k = 0; k < F; ++k) {
    const double a = 2.0 * std::numbers::pi * freqs_[k] * beta;
    ws.phi[k] = static_cast<T>(std::sin(a));
    ws.phi[F + k] = static_cast<T>(std::cos(a));
  }
  ws.pre_emb.assign(P + layout_.emb_b, P + layout_.emb_b + C);
  kernels::gemm_acc<T>(C, 2 * F, 1, P + layout_.emb_w, 2 * F, ws.phi.data(), 1, ws.pre_emb.data(), 1);
  ws.emb.resize(C);
  for (std::size_t c = 0; c < C; ++c) ws.emb[c] = silu(ws.pre_emb[c]);

  ws.in_pre.resize(C * L);
  ws.h.resize(B + 1);
  ws.h[0].resize(C * L);
  for (std::size_t c = 0; c < C; ++c) {
    const T w = P[layout_.in_w + c];
    const T b = P[layout_.in_b + c];
    T* pre = ws.in_pre.data() + c * L;
    T* h0 = ws.h[0].data() + c * L;
    for (std::size_t l = 0; l < L; ++l) {
      pre[l] = w * x[l] + b;
      h0[l] = pre[l] > T(0) ? pre[l] : T(0);
    }
  }

  ws.u.resize(B);
  ws.th.resize(B);
  ws.sg.resize(B);
  ws.g.resize(B);
  ws.skip.assign(C * L, T(0));
  ws.v.resize(2 * C * L);
  ws.o.resize(2 * C * L);
  std::vector<T> tb(C);

  for (std::size_t b = 0; b < B; ++b) {
    const auto& blk = layout_.blocks[b];
    const auto& h = ws.h[b];
    auto& u = ws.u[b];
    tb.assign(P + blk.t_b, P + blk.t_b + C);
    kernels::gemm_acc<T>(C, C, 1, P + blk.t_w, C, ws.emb.data(), 1, tb.data(), 1);
    u.resize(C * L);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t l = 0; l < L; ++l) u[c * L + l] = h[c * L + l] + tb[c];

    fill_rows(ws.v.data(), P + blk.dil_b, 2 * C, L);
    const long d = arch_.dilation(static_cast<int>(b));
    for (std::size_t tap = 0; tap < 3; ++tap) {
      const long shift = (static_cast<long>(tap) - 1) * d;
      const auto [lo, hi] = tap_range(shift, L);
      if (hi == lo) continue;
      kernels::gemm_acc<T>(2 * C, C, hi - lo, P + blk.dil_w + tap * 2 * C * C, C,
                           u.data() + static_cast<long>(lo) + shift, L, ws.v.data() + lo, L);
    }
    ws.th[b].resize(C * L);
    ws.sg[b].resize(C * L);
    ws.g[b].resize(C * L);
    kernels::gated_tanh_sigmoid<T>(ws.v.data(), ws.v.data() + C * L, ws.th[b].data(),
                                   ws.sg[b].data(), ws.g[b].data(), C * L);

    fill_rows(ws.o.data(), P + blk.out_b, 2 * C, L);
    kernels::gemm_acc<T>(2 * C, C, L, P + blk.out_w, C, ws.g[b].data(), L, ws.o.data(), L);
    auto& h_next = ws.h[b + 1];
    h_next.resize(C * L);
    for (std::size_t i = 0; i < C * L; ++i) {
      h_next[i] = (h[i] + ws.o[i]) * inv_sqrt2;
      ws.skip[i] += ws.o[C * L + i];
    }
  }

  const T skip_scale = T(1) / std::sqrt(static_cast<T>(B));
  for (auto& s : ws.skip) s *= skip_scale;
  ws.z_pre.resize(C * L);
  fill_rows(ws.z_pre.data(), P + layout_.skip_b, C, L);
  kernels::gemm_acc<T>(C, C, L, P + layout_.skip_w, C, ws.skip.data(), L, ws.z_pre.data(), L);
  ws.z.resize(C * L);
  for (std::size_t i = 0; i < C * L; ++i) ws.z[i] = ws.z_pre[i] > T(0) ? ws.z_pre[i] : T(0);
  ws.out.assign(L, P[layout_.final_b]);
  kernels::gemm_acc<T>(1, C, L, P + layout_.final_w, C, ws.z.data(), L, ws.out.data(), L);
}

template <class T>
void DenoiserNetwork<T>::backward(std::span<const T> params, std::span<const T> x,
                                  const Workspace& ws, std::span<const T> d_out,
                                  std::span<T> grad) const {
  if (grad.size() != layout_.total) throw ConfigError("denoiser: wrong gradient size");
  const auto C = static_cast<std::size_t>(arch_.channels);
  const auto B = static_cast<std::size_t>(arch_.blocks);
  const auto F2 = ws.phi.size();
  const std::size_t L = ws.length;
  if (d_out.size() != L || x.size() != L) throw ConfigError("denoiser: backward length mismatch");
  const T* P = params.data();
  T* G = grad.data();
  const T inv_sqrt2 = T(1) / std::sqrt(T(2));

  // Output head.
  kernels::gemm_abt_acc<T>(1, C, L, d_out.data(), L, ws.z.data(), L, G + layout_.final_w, C);
  G[layout_.final_b] += row_sum(d_out.data(), L);
  std::vector<T> dz(C * L);
  for (std::size_t c = 0; c < C; ++c) {
    const T w = P[layout_.final_w + c];
    for (std::size_t l = 0; l < L; ++l)
      dz[c * L + l] = ws.z_pre[c * L + l] > T(0) ? w * d_out[l] : T(0);
  }
  kernels::gemm_abt_acc<T>(C, C, L, dz.data(), L, ws.skip.data(), L, G + layout_.skip_w, C);
  for (std::size_t c = 0; c < C; ++c) G[layout_.skip_b + c] += row_sum(dz.data() + c * L, L);

  std::vector<T> wt;
  transpose(P + layout_.skip_w, C, C, wt);
  std::vector<T> d_skip(C * L, T(0));
  kernels::gemm_acc<T>(C, C, L, wt.data(), C, dz.data(), L, d_skip.data(), L);
  const T skip_scale = T(1) / std::sqrt(static_cast<T>(B));
  for (auto& v : d_skip) v *= skip_scale;

  std::vector<T> dh(C * L, T(0));
  std::vector<T> d_o(2 * C * L), dg(C * L), dv(2 * C * L), du(C * L), d_emb(C, T(0));

  for (std::size_t bi = B; bi-- > 0;) {
    const auto& blk = layout_.blocks[bi];
    for (std::size_t i = 0; i < C * L; ++i) {
      d_o[i] = dh[i] * inv_sqrt2;
      d_o[C * L + i] = d_skip[i];
    }
    kernels::gemm_abt_acc<T>(2 * C, C, L, d_o.data(), L, ws.g[bi].data(), L, G + blk.out_w, C);
    for (std::size_t r = 0; r < 2 * C; ++r) G[blk.out_b + r] += row_sum(d_o.data() + r * L, L);

    transpose(P + blk.out_w, 2 * C, C, wt);
    std::fill(dg.begin(), dg.end(), T(0));
    kernels::gemm_acc<T>(C, 2 * C, L, wt.data(), 2 * C, d_o.data(), L, dg.data(), L);

    const auto& th = ws.th[bi];
    const auto& sg = ws.sg[bi];
    for (std::size_t i = 0; i < C * L; ++i) {
      dv[i] = dg[i] * sg[i] * (T(1) - th[i] * th[i]);
      dv[C * L + i] = dg[i] * th[i] * sg[i] * (T(1) - sg[i]);
    }
    for (std::size_t r = 0; r < 2 * C; ++r) G[blk.dil_b + r] += row_sum(dv.data() + r * L, L);

    std::fill(du.begin(), du.end(), T(0));
    const auto& u = ws.u[bi];
    const long d = arch_.dilation(static_cast<int>(bi));
    for (std::size_t tap = 0; tap < 3; ++tap) {
      const long shift = (static_cast<long>(tap) - 1) * d;
      const auto [lo, hi] = tap_range(shift, L);
      if (hi == lo) continue;
      const std::size_t n = hi - lo;
      const std::size_t w_off = blk.dil_w + tap * 2 * C * C;
      kernels::gemm_abt_acc<T>(2 * C, C, n, dv.data() + lo, L, u.data() + static_cast<long>(lo) + shift,
                               L, G + w_off, C);
      transpose(P + w_off, 2 * C, C, wt);
      kernels::gemm_acc<T>(C, 2 * C, n, wt.data(), 2 * C, dv.data() + lo, L,
                           du.data() + static_cast<long>(lo) + shift, L);
    }

    std::vector<T> dtb(C);
    for (std::size_t c = 0; c < C; ++c) dtb[c] = row_sum(du.data() + c * L, L);
    kernels::gemm_abt_acc<T>(C, C, 1, dtb.data(), 1, ws.emb.data(), 1, G + blk.t_w, C);
    for (std::size_t c = 0; c < C; ++c) G[blk.t_b + c] += dtb[c];
    transpose(P + blk.t_w, C, C, wt);
    kernels::gemm_acc<T>(C, C, 1, wt.data(), C, dtb.data(), 1, d_emb.data(), 1);

    for (std::size_t i = 0; i < C * L; ++i) dh[i] = dh[i] * inv_sqrt2 + du[i];
  }

  std::vector<T> d_pre(C);
  for (std::size_t c = 0; c < C; ++c) d_pre[c] = d_emb[c] * silu_grad(ws.pre_emb[c]);
  kernels::gemm_abt_acc<T>(C, F2, 1, d_pre.data(), 1, ws.phi.data(), 1, G + layout_.emb_w, F2);
  for (std::size_t c = 0; c < C; ++c) G[layout_.emb_b + c] += d_pre[c];

  for (std::size_t c = 0; c < C; ++c) {
    T gw = 0, gb = 0;
    const T* pre = ws.in_pre.data() + c * L;
    const T* dhc = dh.data() + c * L;
    for (std::size_t l = 0; l < L; ++l) {
      if (pre[l] > T(0)) {
        gw += dhc[l] * x[l];
        gb += dhc[l];
      }
    }
    G[layout_.in_w + c] += gw;
    G[layout_.in_b + c] += gb;
  }
}

template class DenoiserNetwork<float>;
template class DenoiserNetwork<double>;

// ---------------------------------------------------------------- ToyDenoiser

namespace {

std::vector<double> draw_frequencies(const DenoiserArch& arch, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, arch.fourier_sigma);
  std::vector<double> f(static_cast<std::size_t>(arch.fourier_features));
  for (auto& v : f) v = normal(rng);
  return f;
}

std::vector<float> init_params(const DenoiserArch& arch, std::mt19937_64& rng) {
  const DenoiserLayout lay(arch);
  const auto C = static_cast<std::size_t>(arch.channels);
  const auto F2 = 2 * static_cast<std::size_t>(arch.fourier_features);
  std::vector<float> p(lay.total, 0.0f);
  auto fill = [&](std::size_t off, std::size_t n, double fan_in) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(fan_in));
    for (std::size_t i = 0; i < n; ++i) p[off + i] = static_cast<float>(normal(rng));
  };
  fill(lay.emb_w, C * F2, static_cast<double>(F2));
  fill(lay.in_w, C, 1.0);
  for (const auto& blk : lay.blocks) {
    fill(blk.t_w, C * C, static_cast<double>(C));
    fill(blk.dil_w, 3 * 2 * C * C, 3.0 * static_cast<double>(C));
    fill(blk.out_w, 2 * C * C, static_cast<double>(C));
  }
  fill(lay.skip_w, C * C, static_cast<double>(C));
  // final_w / final_b stay zero: the untrained model predicts eps_hat = 0.
  return p;
}

void check_finite(std::span<const double> x, const char* what) {
  for (double v : x)
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

}  // namespace

ToyDenoiser::InitState ToyDenoiser::random_init(const DenoiserArch& arch, std::uint64_t seed) {
  validate(arch);
  std::mt19937_64 rng(seed);
  InitState init;
  init.freqs = draw_frequencies(arch, rng);
  init.params = init_params(arch, rng);
  return init;
}

ToyDenoiser::ToyDenoiser(DenoiserArch arch, NoiseSchedule sched, std::uint64_t seed)
    : ToyDenoiser(arch, std::move(sched), random_init(arch, seed)) {}

ToyDenoiser::ToyDenoiser(DenoiserArch arch, NoiseSchedule sched, InitState init)
    : ToyDenoiser(std::move(arch), std::move(sched), std::move(init.freqs),
                  std::move(init.params)) {}

ToyDenoiser::ToyDenoiser(DenoiserArch arch, NoiseSchedule sched,
                         std::vector<double> fourier_frequencies, std::vector<float> params)
    : arch_(std::move(arch)),
      sched_(std::move(sched)),
      freqs_(std::move(fourier_frequencies)),
      params_(std::move(params)),
      net_(arch_, freqs_) {
  if (params_.size() != net_.param_count())
    throw ConfigError("denoiser: expected " + std::to_string(net_.param_count()) +
                      " parameters, got " + std::to_string(params_.size()));
}

std::vector<double> ToyDenoiser::predict_eps(std::span<const double> x_t, int t) const {
  if (static_cast<int>(x_t.size()) < receptive_field())
    throw ConfigError("denoiser: input of " + std::to_string(x_t.size()) +
                      " samples is shorter than the receptive field (" +
                      std::to_string(receptive_field()) + ")");
  check_finite(x_t, "denoiser input");
  for (float v : params_)
    if (!std::isfinite(v)) throw NumericError("denoiser parameters: non-finite value");
  const std::vector<float> xf(x_t.begin(), x_t.end());
  typename DenoiserNetwork<float>::Workspace ws;
  net_.forward(params_, xf, sched_.beta(t), ws);
  return {ws.out.begin(), ws.out.end()};
}

std::vector<double> ToyDenoiser::predict_eps_f64(std::span<const double> params,
                                                 std::span<const double> x_t, int t) const {
  const auto net = network_f64();
  typename DenoiserNetwork<double>::Workspace ws;
  net.forward(params, x_t, sched_.beta(t), ws);
  return ws.out;
}

}  // namespace postdiff
