#include "postdiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "postdiff/error.hpp"

namespace postdiff {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || text.empty())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(text) +
                      "' as a number");
  return value;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      {"schedule.steps", "200", "number of diffusion steps T"},
      {"schedule.beta_min", "0.0001", "first beta of the linear schedule"},
      {"schedule.beta_max", "0.02", "last beta of the linear schedule"},

      {"model.checkpoint", "", "denoiser checkpoint path"},
      {"model.channels", "32", "residual channels"},
      {"model.blocks", "8", "residual blocks"},
      {"model.fourier_features", "16", "random Fourier frequencies of beta(t)"},
      {"model.fourier_sigma", "50", "std of the Fourier frequencies"},
      {"model.dilations", "1,2,4,8", "dilation cycle"},
      {"model.init_seed", "0", "seed of the random initialization"},

      {"train.learning_rate", "0.0002", "Adam learning rate"},
      {"train.adam_beta1", "0.9", "Adam beta1"},
      {"train.adam_beta2", "0.999", "Adam beta2"},
      {"train.batch_size", "8", "clips per step"},
      {"train.segment_length", "8000", "samples per training crop"},
      {"train.epochs", "1", "passes over the dataset"},
      {"train.max_steps", "0", "if > 0, exact number of optimizer steps"},
      {"train.clips", "64", "number of toy clips generated for training"},
      {"train.loss_csv", "", "loss history output (step,loss)"},

      {"data.sample_rate", "16000", "sample rate in Hz"},
      {"data.duration", "0.5", "clip duration in seconds"},
      {"data.f0_min", "80", "lowest fundamental in Hz"},
      {"data.f0_max", "300", "highest fundamental in Hz"},
      {"data.max_harmonics", "5", "harmonics per clip drawn from 1..max"},
      {"data.noise_floor", "0.01", "std of additive white noise"},

      {"operator.cutoff_hz", "2000", "lowpass cutoff"},
      {"operator.taps", "129", "lowpass FIR length (odd)"},
      {"operator.clip_c", "0", "clip threshold; 0 derives it (see README)"},
      {"operator.clip_snr_db", "3", "degrade: clip so the input has this SNR"},
      {"mel.n_fft", "1024", "STFT size"},
      {"mel.hop", "256", "STFT hop"},
      {"mel.n_mels", "80", "mel bands"},
      {"mel.fmin", "0", "lowest mel edge in Hz"},
      {"mel.fmax", "0", "highest mel edge in Hz; 0 = Nyquist"},
      {"mel.log_floor", "1e-5", "floor inside the log"},

      {"guidance.mode", "auto", "auto|none|imputation|reconstruction|separation"},
      {"guidance.xi0", "auto", "guidance scale; auto = per-task default"},
      {"guidance.norm_eps", "1e-8", "gradient-norm guard delta"},
      {"guidance.variance", "beta_tilde", "ancestral variance: beta_tilde|beta"},
      {"guidance.trace", "", "sampler trace CSV output"},

      {"run.seed", "0", "seed of the sampler / generator"},
      {"run.task", "", "degrade: bwe|declip|vocode|separate"},
      {"run.input", "", "input file"},
      {"run.input2", "", "second input (separation sources)"},
      {"run.output", "", "output file"},
      {"run.output2", "", "second output (separation)"},
      {"run.reference", "", "clean reference for evaluation"},
      {"run.reference2", "", "second clean reference (separation)"},
      {"run.eval", "false", "compute metrics against the references"},
      {"run.metrics", "", "metric record output (JSON lines); empty = stdout"},
      {"run.count", "1", "number of files to generate"},
      {"run.length", "8000", "samples per unconditional draw"},
  };
  return keys;
}

Config::Config() {
  for (const auto& k : config_keys()) values_.emplace(k.name, k.default_value);
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read config file: " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  parse_text(text.str(), path.string());
}

void Config::parse_text(std::string_view text, std::string_view origin) {
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string_view::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no) + ": "; };
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where() + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where() + "expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where() + "missing key");
    if (section.empty()) throw ConfigError(where() + "key outside of a section");
    try {
      set(section + "." + std::string(key), std::string(trim(line.substr(eq + 1))));
    } catch (const ConfigError& e) {
      throw ConfigError(where() + e.what());
    }
  }
}

void Config::set(std::string_view key, std::string value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second = std::move(value);
}

const std::string& Config::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

double Config::get_double(std::string_view key) const { return parse_number<double>(key, get(key)); }
int Config::get_int(std::string_view key) const { return parse_number<int>(key, get(key)); }
std::uint64_t Config::get_u64(std::string_view key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

bool Config::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': expected a boolean, got '" + v + "'");
}

std::vector<int> Config::get_int_list(std::string_view key) const {
  std::vector<int> out;
  std::string_view rest = get(key);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_number<int>(key, trim(rest.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

std::string Config::dump() const {
  std::string out, section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + get(k.name) + '\n';
  }
  return out;
}

NoiseSchedule schedule_from(const Config& cfg) {
  return NoiseSchedule::linear(cfg.get_int("schedule.steps"), cfg.get_double("schedule.beta_min"),
                               cfg.get_double("schedule.beta_max"));
}

DenoiserArch arch_from(const Config& cfg) {
  DenoiserArch a;
  a.channels = cfg.get_int("model.channels");
  a.blocks = cfg.get_int("model.blocks");
  a.fourier_features = cfg.get_int("model.fourier_features");
  a.fourier_sigma = cfg.get_double("model.fourier_sigma");
  a.dilation_cycle = cfg.get_int_list("model.dilations");
  validate(a);
  return a;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("train.learning_rate");
  t.adam_beta1 = cfg.get_double("train.adam_beta1");
  t.adam_beta2 = cfg.get_double("train.adam_beta2");
  t.batch_size = cfg.get_int("train.batch_size");
  t.segment_length = cfg.get_int("train.segment_length");
  t.epochs = cfg.get_int("train.epochs");
  t.max_steps = cfg.get_int("train.max_steps");
  t.seed = cfg.get_u64("run.seed");
  validate(t);
  return t;
}

ToyHarmonicConfig toy_config_from(const Config& cfg) {
  ToyHarmonicConfig t;
  t.sample_rate = cfg.get_int("data.sample_rate");
  t.duration = cfg.get_double("data.duration");
  t.f0_min = cfg.get_double("data.f0_min");
  t.f0_max = cfg.get_double("data.f0_max");
  t.max_harmonics = cfg.get_int("data.max_harmonics");
  t.noise_floor = cfg.get_double("data.noise_floor");
  t.seed = cfg.get_u64("run.seed");
  validate(t);
  return t;
}

LowpassSpec lowpass_from(const Config& cfg) {
  LowpassSpec s;
  s.cutoff_hz = cfg.get_double("operator.cutoff_hz");
  s.sample_rate_hz = cfg.get_double("data.sample_rate");
  s.taps = cfg.get_int("operator.taps");
  validate_lowpass(s);
  return s;
}

MelSpec mel_from(const Config& cfg) {
  MelSpec m;
  m.n_fft = cfg.get_int("mel.n_fft");
  m.hop = cfg.get_int("mel.hop");
  m.n_mels = cfg.get_int("mel.n_mels");
  m.fmin = cfg.get_double("mel.fmin");
  m.fmax = cfg.get_double("mel.fmax");
  m.log_floor = cfg.get_double("mel.log_floor");
  m.sample_rate = cfg.get_double("data.sample_rate");
  MelOperator check(m);
  return m;
}

double default_xi0(Task task) {
  switch (task) {
    case Task::Bwe: return 1.0;
    case Task::Declip: return 500.0;
    case Task::Vocode: return 1000.0;
    case Task::Separate: return 1.0;
  }
  return 1.0;
}

GuidanceConfig guidance_from(const Config& cfg, Task task) {
  GuidanceConfig g;
  const auto& mode = cfg.get("guidance.mode");
  g.mode = mode == "auto" ? default_guidance(task) : parse_guidance_mode(mode);
  const auto& xi = cfg.get("guidance.xi0");
  g.xi0 = xi == "auto" ? default_xi0(task) : cfg.get_double("guidance.xi0");
  g.norm_eps = cfg.get_double("guidance.norm_eps");
  g.variance = parse_ancestral_variance(cfg.get("guidance.variance"));
  g.seed = cfg.get_u64("run.seed");
  validate(g);
  return g;
}

}  // namespace postdiff
