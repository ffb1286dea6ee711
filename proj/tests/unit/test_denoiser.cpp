#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "postdiff/data.hpp"
#include "postdiff/denoiser.hpp"
#include "postdiff/error.hpp"
#include "util.hpp"

using namespace postdiff;
namespace fs = std::filesystem;

namespace {

DenoiserArch small_arch() {
  DenoiserArch a;
  a.channels = 4;
  a.blocks = 3;
  a.fourier_features = 3;
  a.dilation_cycle = {1, 2};
  return a;
}

std::vector<DenoisingExample> random_batch(std::size_t n, std::size_t len, int T,
                                           std::mt19937_64& rng) {
  std::uniform_int_distribution<int> step(1, T);
  std::vector<DenoisingExample> batch(n);
  for (auto& ex : batch) {
    ex.x0 = testutil::randn(len, rng, 0.5);
    ex.eps = testutil::randn(len, rng);
    ex.t = step(rng);
  }
  return batch;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "postdiff_denoiser_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("receptive field and layout") {
  const auto a = small_arch();
  CHECK(a.receptive_field() == 1 + 2 * (1 + 2 + 1));
  CHECK(DenoiserArch{}.receptive_field() == 61);
  const DenoiserLayout layout(a);
  CHECK(layout.total > 100);
  CHECK(layout.blocks.size() == 3);
  DenoiserArch bad = a;
  bad.dilation_cycle = {};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = a;
  bad.dilation_cycle = {1, 0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = a;
  bad.channels = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("fresh model predicts zero and is deterministic") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  const ToyDenoiser m1(small_arch(), s, 5);
  const ToyDenoiser m2(small_arch(), s, 5);
  const ToyDenoiser m3(small_arch(), s, 6);
  CHECK(std::vector<float>(m1.params().begin(), m1.params().end()) ==
        std::vector<float>(m2.params().begin(), m2.params().end()));
  CHECK(std::vector<float>(m1.params().begin(), m1.params().end()) !=
        std::vector<float>(m3.params().begin(), m3.params().end()));
  std::mt19937_64 rng(1);
  const auto x = testutil::randn(64, rng);
  const auto eps = m1.predict_eps(x, 100);
  CHECK(eps.size() == 64);
  for (double v : eps) CHECK(v == 0.0);
  CHECK_THROWS_AS(m1.predict_eps(testutil::randn(5, rng), 10), ConfigError);
  auto nan_x = x;
  nan_x[3] = std::nan("");
  CHECK_THROWS_AS(m1.predict_eps(nan_x, 10), NumericError);
}

TEST_CASE("analytic parameter gradient matches finite differences") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  const ToyDenoiser model(small_arch(), s, 3);
  const auto net = model.network_f64();
  std::mt19937_64 rng(21);
  auto params = model.params_f64();
  // Move away from the zero output projection so every path carries gradient.
  for (auto& p : params) p += 0.2 * std::normal_distribution<double>()(rng);
  const auto batch = random_batch(2, 40, 200, rng);

  std::vector<double> grad;
  denoising_loss<double>(net, params, batch, s, &grad);
  REQUIRE(grad.size() == params.size());

  const double h = 1e-6;
  const std::size_t stride = std::max<std::size_t>(1, params.size() / 150);
  std::size_t checked = 0, bad = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); i += stride) {
    auto p = params;
    p[i] = params[i] + h;
    const double up = denoising_loss<double>(net, p, batch, s, nullptr);
    p[i] = params[i] - h;
    const double dn = denoising_loss<double>(net, p, batch, s, nullptr);
    const double fd = (up - dn) / (2 * h);
    // Relative tolerance with an absolute floor at the finite-difference noise level.
    const double err = std::abs(fd - grad[i]) / (std::abs(fd) + std::abs(grad[i]) + 1e-4);
    worst = std::max(worst, err);
    if (err > 1e-5) ++bad;
    ++checked;
  }
  CHECK(checked >= 100);
  CHECK(bad == 0);
  MESSAGE("checked " << checked << " parameters, worst relative error " << worst);
}

TEST_CASE("float and double networks agree") {
  const auto s = NoiseSchedule::linear(200, 1e-4, 0.02);
  ToyDenoiser model(small_arch(), s, 4);
  std::mt19937_64 rng(2);
  for (auto& p : model.mutable_params()) p += static_cast<float>(0.1 * std::normal_distribution<double>()(rng));
  const auto x = testutil::randn(128, rng);
  const auto a = model.predict_eps(x, 50);
  const auto b = model.predict_eps_f64(model.params_f64(), x, 50);
  CHECK(testutil::rel_err(a, b) < 1e-5);
}

TEST_CASE("training lowers the loss and is reproducible") {
  const auto s = NoiseSchedule::linear(50, 1e-4, 0.05);
  ToyHarmonicConfig data;
  data.duration = 0.02;
  const auto clips = gen_toy_harmonic(data, 6);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.segment_length = 256;
  tc.max_steps = 60;
  tc.learning_rate = 3e-3;
  ToyDenoiser a(small_arch(), s, 0), b(small_arch(), s, 0);
  int calls = 0;
  const auto ra = train_denoiser(a, clips, s, tc, [&](int, double) { ++calls; });
  const auto rb = train_denoiser(b, clips, s, tc);
  CHECK(calls == 60);
  REQUIRE(ra.loss_history.size() == 60);
  CHECK(ra.loss_history == rb.loss_history);
  const auto [first, last] = smoothed_loss_endpoints(ra.loss_history, 10);
  CHECK(last < first);

  tc.segment_length = 4;
  CHECK_THROWS_AS(train_denoiser(a, clips, s, tc), ConfigError);
  tc.segment_length = 100000;
  CHECK_THROWS_AS(train_denoiser(a, clips, s, tc), ConfigError);
  tc.segment_length = 256;
  CHECK_THROWS_AS(train_denoiser(a, clips, NoiseSchedule::linear(60, 1e-4, 0.05), tc), ConfigError);
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(tc), ConfigError);
}

TEST_CASE("epoch-bounded training visits every clip once per epoch") {
  const auto s = NoiseSchedule::linear(20, 1e-4, 0.05);
  ToyHarmonicConfig data;
  data.duration = 0.02;
  const auto clips = gen_toy_harmonic(data, 7);
  TrainConfig tc;
  tc.batch_size = 3;
  tc.segment_length = 128;
  tc.epochs = 2;
  ToyDenoiser m(small_arch(), s, 0);
  const auto r = train_denoiser(m, clips, s, tc);
  CHECK(r.loss_history.size() == 6);  // ceil(7 / 3) steps per epoch
}

TEST_CASE("checkpoint round trip") {
  const auto s = NoiseSchedule::linear(30, 2e-4, 0.03);
  auto arch = small_arch();
  arch.fourier_sigma = 12.5;
  ToyDenoiser m(arch, s, 9);
  std::mt19937_64 rng(3);
  for (auto& p : m.mutable_params()) p = static_cast<float>(std::normal_distribution<double>()(rng));
  const auto path = temp_file("model.ckpt");
  save_checkpoint(path, m);
  const auto r = load_checkpoint(path);
  CHECK(r.arch() == m.arch());
  CHECK(r.schedule() == m.schedule());
  CHECK(std::vector<double>(r.fourier_frequencies().begin(), r.fourier_frequencies().end()) ==
        std::vector<double>(m.fourier_frequencies().begin(), m.fourier_frequencies().end()));
  CHECK(std::vector<float>(r.params().begin(), r.params().end()) ==
        std::vector<float>(m.params().begin(), m.params().end()));
  const auto x = testutil::randn(64, rng);
  CHECK(r.predict_eps(x, 7) == m.predict_eps(x, 7));

  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  in.close();
  const auto trunc = temp_file("trunc.ckpt");
  {
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 10));
  }
  CHECK_THROWS_AS(load_checkpoint(trunc), FormatError);
  const auto junk = temp_file("junk.ckpt");
  {
    std::ofstream out(junk, std::ios::binary);
    out << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(junk), FormatError);
  CHECK_THROWS_AS(load_checkpoint(temp_file("missing.ckpt")), FormatError);
}
