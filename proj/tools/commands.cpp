#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "postdiff/data.hpp"
#include "postdiff/denoiser.hpp"
#include "postdiff/error.hpp"
#include "postdiff/guidance.hpp"
#include "postdiff/metrics.hpp"
#include "postdiff/operators.hpp"
#include "postdiff/oracle_suite.hpp"

namespace postdiff::cli {

namespace fs = std::filesystem;

namespace {

// Mixture WAVs hold (x1 + x2) / 2 so two sources normalized to 0.95 fit the PCM range.
constexpr double kMixtureFileGain = 0.5;

std::string required(const Config& cfg, const char* key) {
  const auto& v = cfg.get(key);
  if (v.empty()) throw ConfigError(std::string("missing required key '") + key + "'");
  return v;
}

fs::path input_path(const Config& cfg, const char* key) {
  fs::path p = required(cfg, key);
  if (!fs::is_regular_file(p)) throw FormatError(std::string(key) + ": no such file: " + p.string());
  return p;
}

fs::path output_path(const Config& cfg, const char* key) {
  fs::path p = required(cfg, key);
  const auto parent = p.parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw FormatError(std::string(key) + ": directory does not exist: " + parent.string());
  if (fs::is_directory(p)) throw FormatError(std::string(key) + ": is a directory: " + p.string());
  return p;
}

std::optional<fs::path> optional_output(const Config& cfg, const char* key) {
  if (cfg.get(key).empty()) return std::nullopt;
  return output_path(cfg, key);
}

/// "out.wav" with count 3 -> out_000.wav, out_001.wav, out_002.wav.
std::vector<fs::path> numbered(const fs::path& base, int count) {
  if (count == 1) return {base};
  std::vector<fs::path> out;
  for (int i = 0; i < count; ++i) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%03d", i);
    fs::path p = base;
    p.replace_filename(base.stem().string() + suffix + base.extension().string());
    out.push_back(p);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

void emit_metrics(const Config& cfg, const MetricReport& report) {
  std::cerr << report.to_text() << '\n';
  const auto line = report.to_json_line() + "\n";
  if (cfg.get("run.metrics").empty())
    std::cout << line;
  else
    write_text(cfg.get("run.metrics"), line);
}

Waveform read_checked(const fs::path& path, int sample_rate) {
  auto w = wav_read(path);
  if (w.sample_rate != sample_rate)
    throw FormatError(path.string() + ": sample rate " + std::to_string(w.sample_rate) +
                      " Hz, expected " + std::to_string(sample_rate));
  return w;
}

/// Loads the checkpoint and insists its schedule equals the configured one.
ToyDenoiser load_model(const Config& cfg, const NoiseSchedule& sched) {
  auto model = load_checkpoint(input_path(cfg, "model.checkpoint"));
  if (!(model.schedule() == sched))
    throw ConfigError("checkpoint was trained with schedule (T=" +
                      std::to_string(model.schedule().steps()) + ") that differs from the configured one");
  return model;
}

// ------------------------------------------------------------ commands

int cmd_gen_toy(const Config& cfg) {
  const auto toy = toy_config_from(cfg);
  const int count = cfg.get_int("run.count");
  if (count < 1) throw ConfigError("run.count must be positive");
  const auto paths = numbered(output_path(cfg, "run.output"), count);
  const auto clips = gen_toy_harmonic(toy, static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < clips.size(); ++i) wav_write(paths[i], {clips[i], toy.sample_rate});
  return 0;
}

int cmd_degrade(const Config& cfg) {
  const Task task = parse_task(required(cfg, "run.task"));
  const int sr = cfg.get_int("data.sample_rate");
  const auto lp = lowpass_from(cfg);
  const auto mel = mel_from(cfg);
  const auto in = input_path(cfg, "run.input");
  const auto in2 = task == Task::Separate ? input_path(cfg, "run.input2") : fs::path{};
  const auto out = output_path(cfg, "run.output");
  const auto x = read_checked(in, sr);

  switch (task) {
    case Task::Bwe:
      wav_write(out, {lowpass_apply(x.samples, lp), sr});
      break;
    case Task::Declip: {
      double c = cfg.get_double("operator.clip_c");
      if (c <= 0.0) c = clip_threshold_for_snr(x.samples, cfg.get_double("operator.clip_snr_db"));
      const auto y = clip_apply(x.samples, ClipSpec{c});
      double sig = 0.0, err = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) {
        sig += x.samples[i] * x.samples[i];
        err += (x.samples[i] - y[i]) * (x.samples[i] - y[i]);
      }
      std::cerr << "clip threshold c = " << c << ", SNR " << 10.0 * std::log10(sig / err) << " dB\n";
      wav_write(out, {y, sr});
      break;
    }
    case Task::Vocode:
      tensor_write(out, mel_apply(x.samples, mel));
      break;
    case Task::Separate: {
      const auto x2 = read_checked(in2, sr);
      auto mix = make_mixture(x.samples, x2.samples);
      for (auto& v : mix.y) v *= kMixtureFileGain;
      wav_write(out, {mix.y, sr});
      break;
    }
  }
  return 0;
}

int cmd_train(const Config& cfg) {
  const auto sched = schedule_from(cfg);
  const auto arch = arch_from(cfg);
  const auto tcfg = train_config_from(cfg);
  const auto toy = toy_config_from(cfg);
  const int clips = cfg.get_int("train.clips");
  if (clips < 1) throw ConfigError("train.clips must be positive");
  if (static_cast<std::size_t>(tcfg.segment_length) > toy.length())
    throw ConfigError("train.segment_length exceeds the clip length");
  const auto ckpt = output_path(cfg, "model.checkpoint");
  const auto loss_csv = optional_output(cfg, "train.loss_csv");

  const auto data = gen_toy_harmonic(toy, static_cast<std::size_t>(clips));
  ToyDenoiser model(arch, sched, cfg.get_u64("model.init_seed"));
  std::cerr << "denoiser: " << model.param_count() << " parameters, receptive field "
            << model.receptive_field() << " samples\n";
  const auto result = train_denoiser(model, data, sched, tcfg, [](int step, double loss) {
    if (step % 100 == 0) std::cerr << "step " << step << " loss " << loss << '\n';
  });
  save_checkpoint(ckpt, model);
  if (loss_csv) {
    std::string text = "step,loss\n";
    char row[64];
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      std::snprintf(row, sizeof row, "%zu,%.9g\n", i + 1, result.loss_history[i]);
      text += row;
    }
    write_text(*loss_csv, text);
  }
  const auto [first, last] = smoothed_loss_endpoints(result.loss_history, 20);
  std::cerr << "smoothed loss " << first << " -> " << last << '\n';
  return 0;
}

int cmd_sample(const Config& cfg) {
  const auto sched = schedule_from(cfg);
  GuidanceConfig g = guidance_from(cfg, Task::Bwe);
  g.mode = GuidanceMode::None;
  const int count = cfg.get_int("run.count");
  const int length = cfg.get_int("run.length");
  if (count < 1 || length < 1) throw ConfigError("run.count and run.length must be positive");
  const auto paths = numbered(output_path(cfg, "run.output"), count);
  const auto model = load_model(cfg, sched);
  const int sr = cfg.get_int("data.sample_rate");

  std::vector<std::vector<double>> draws;
  for (int i = 0; i < count; ++i) {
    GuidanceConfig gi = g;
    gi.seed = g.seed + static_cast<std::uint64_t>(i);
    draws.push_back(sample_chain(model, static_cast<std::size_t>(length), sched, gi).x0);
  }
  for (std::size_t i = 0; i < draws.size(); ++i) wav_write(paths[i], {draws[i], sr});
  return 0;
}

int run_task(const Config& cfg, Task task) {
  const auto sched = schedule_from(cfg);
  const auto g = guidance_from(cfg, task);
  const int sr = cfg.get_int("data.sample_rate");
  TaskSetup setup;
  setup.lowpass = lowpass_from(cfg);
  setup.mel = mel_from(cfg);
  const bool eval = cfg.get_bool("run.eval");

  const auto in = input_path(cfg, "run.input");
  const auto out = output_path(cfg, "run.output");
  const auto out2 = task == Task::Separate ? output_path(cfg, "run.output2") : fs::path{};
  const auto trace_path = optional_output(cfg, "guidance.trace");
  if (!cfg.get("run.metrics").empty()) output_path(cfg, "run.metrics");
  std::optional<Waveform> ref, ref2;
  if (eval) {
    ref = read_checked(input_path(cfg, "run.reference"), sr);
    if (task == Task::Separate) ref2 = read_checked(input_path(cfg, "run.reference2"), sr);
  }

  std::vector<double> y;
  Matrix mel_in;
  if (task == Task::Vocode) {
    mel_in = tensor_read(in);
    if (mel_in.rows != static_cast<std::size_t>(setup.mel.n_mels))
      throw FormatError(in.string() + ": expected " + std::to_string(setup.mel.n_mels) +
                        " mel rows, found " + std::to_string(mel_in.rows));
    y = mel_in.data;
  } else {
    y = read_checked(in, sr).samples;
    if (task == Task::Separate)
      for (auto& v : y) v /= kMixtureFileGain;
  }
  if (task == Task::Declip) {
    const double c = cfg.get_double("operator.clip_c");
    setup.clip.threshold = c > 0.0 ? c : peak_abs(y);
    ClipOperator check(setup.clip);
  }
  const std::size_t n = signal_length_for(task, y.size(), setup);
  if (ref && ref->samples.size() != n)
    throw ConfigError("reference length " + std::to_string(ref->samples.size()) +
                      " does not match the signal length " + std::to_string(n));
  if (ref2 && ref2->samples.size() != n)
    throw ConfigError("second reference length does not match the signal length");
  const auto model = load_model(cfg, sched);
  if (n < static_cast<std::size_t>(model.receptive_field()))
    throw ConfigError("signal is shorter than the denoiser's receptive field");

  const auto result = solve_inverse(task, y, model, sched, g, setup);

  MetricReport report;
  report.task = std::string(to_string(task));
  const auto& x = result.outputs[0];
  if (task == Task::Vocode) {
    const auto re = MelOperator(setup.mel).apply(x);
    double mae = 0.0;
    for (std::size_t i = 0; i < re.size(); ++i) mae += std::abs(re[i] - y[i]);
    report.mel_mae = mae / static_cast<double>(re.size());
  }
  if (eval) {
    const auto& r = ref->samples;
    switch (task) {
      case Task::Bwe:
        report.si_snr_db = si_snr(r, x);
        report.input_si_snr_db = si_snr(r, y);
        report.lsd = lsd(r, x);
        report.input_lsd = lsd(r, y);
        report.low_band_lsd = lsd_band(y, lowpass_apply(x, setup.lowpass), sr, 0.0,
                                       0.85 * setup.lowpass.cutoff_hz);
        break;
      case Task::Declip:
        report.si_snr_db = si_snr(r, x);
        report.input_si_snr_db = si_snr(r, y);
        break;
      case Task::Vocode:
        report.si_snr_db = si_snr(r, x);
        report.lsd = lsd(r, x);
        break;
      case Task::Separate: {
        const auto& r2 = ref2->samples;
        const auto p = si_snr_best_permutation({r, r2}, {result.outputs[0], result.outputs[1]});
        report.si_snr_db = p.mean_db;
        report.swapped = p.swapped;
        report.input_si_snr_db = 0.5 * (si_snr(r, y) + si_snr(r2, y));
        break;
      }
    }
  }

  wav_write(out, {x, sr});
  if (task == Task::Separate) wav_write(out2, {result.outputs[1], sr});
  if (trace_path) write_text(*trace_path, result.trace.to_csv());
  emit_metrics(cfg, report);
  return 0;
}

int cmd_bwe(const Config& cfg) { return run_task(cfg, Task::Bwe); }
int cmd_declip(const Config& cfg) { return run_task(cfg, Task::Declip); }
int cmd_vocode(const Config& cfg) { return run_task(cfg, Task::Vocode); }
int cmd_separate(const Config& cfg) { return run_task(cfg, Task::Separate); }

int cmd_oracle_check(const Config& cfg) {
  OracleOptions opt;
  opt.seed = cfg.get_u64("run.seed");
  const auto metrics = optional_output(cfg, "run.metrics");
  bool all = true;
  std::string records;
  run_oracle_suite(opt, [&](const CheckResult& r) {
    all = all && r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << std::endl;
    records += R"({"check":")" + r.name + R"(","passed":)" + (r.passed ? "true" : "false") + "}\n";
  });
  if (metrics) write_text(*metrics, records);
  std::cout << (all ? "all oracle checks passed" : "oracle checks FAILED") << '\n';
  return all ? 0 : 1;
}

}  // namespace

const std::vector<Command>& commands() {
  static const std::vector<Command> list = {
      {"gen-toy", "write synthetic harmonic clips", cmd_gen_toy},
      {"degrade", "apply a task's degradation (run.task) to a clean clip", cmd_degrade},
      {"train", "train the toy denoiser on generated clips", cmd_train},
      {"sample", "unconditional samples from a checkpoint", cmd_sample},
      {"bwe", "bandwidth extension by imputation guidance", cmd_bwe},
      {"declip", "declipping by reconstruction guidance", cmd_declip},
      {"vocode", "mel-spectrogram inversion by reconstruction guidance", cmd_vocode},
      {"separate", "two-source separation with the analytic mixture likelihood", cmd_separate},
      {"oracle-check", "run the analytic-oracle verification suites", cmd_oracle_check},
  };
  return list;
}

}  // namespace postdiff::cli
