#pragma once

// Flat run configuration: "[section]" headers and "key = value" lines, '#' or
// ';' comments. Every key has a dotted name "section.key" that can also be set
// from the command line. Unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "postdiff/data.hpp"
#include "postdiff/denoiser.hpp"
#include "postdiff/guidance.hpp"
#include "postdiff/operators.hpp"
#include "postdiff/schedule.hpp"

namespace postdiff {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its default.
const std::vector<ConfigKey>& config_keys();

class Config {
 public:
  Config();

  /// Throws FormatError if unreadable, ConfigError on syntax errors or unknown keys.
  void load_file(const std::filesystem::path& path);
  void parse_text(std::string_view text, std::string_view origin = "<text>");
  void set(std::string_view key, std::string value);

  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  int get_int(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key) const;
  bool get_bool(std::string_view key) const;
  std::vector<int> get_int_list(std::string_view key) const;

  /// Current values as a config file.
  std::string dump() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

NoiseSchedule schedule_from(const Config& cfg);
DenoiserArch arch_from(const Config& cfg);
TrainConfig train_config_from(const Config& cfg);
ToyHarmonicConfig toy_config_from(const Config& cfg);
LowpassSpec lowpass_from(const Config& cfg);
MelSpec mel_from(const Config& cfg);
/// guidance.mode "auto" selects the task's own mode.
GuidanceConfig guidance_from(const Config& cfg, Task task);
/// Per-task default for guidance.xi0 = auto.
double default_xi0(Task task);

}  // namespace postdiff
