#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "postdiff/denoiser.hpp"
#include "postdiff/error.hpp"

namespace postdiff {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ToyDenoiser& model) {
  const auto& arch = model.arch();
  const auto& sched = model.schedule();
  nlohmann::ordered_json header;
  header["format"] = 1;
  header["architecture"] = {{"channels", arch.channels},
                            {"blocks", arch.blocks},
                            {"fourier_features", arch.fourier_features},
                            {"fourier_sigma", arch.fourier_sigma},
                            {"dilation_cycle", arch.dilation_cycle}};
  header["schedule"] = {{"steps", sched.steps()},
                        {"beta_min", sched.beta_min()},
                        {"beta_max", sched.beta_max()}};
  const auto freqs = model.fourier_frequencies();
  header["fourier_frequencies"] = std::vector<double>(freqs.begin(), freqs.end());
  header["param_count"] = model.param_count();
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path.string());
  const std::uint64_t len = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  const auto params = model.params();
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size_bytes()));
  if (!out) throw FormatError("failed writing checkpoint: " + path.string());
}

ToyDenoiser load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw FormatError(path.string() + ": not a postdiff checkpoint");
  if (len > (1u << 26)) throw FormatError(path.string() + ": implausible header size");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(path.string() + ": truncated header");

  try {
    const auto header = nlohmann::json::parse(text);
    if (header.at("format").get<int>() != 1)
      throw FormatError(path.string() + ": unsupported checkpoint format version");
    const auto& a = header.at("architecture");
    DenoiserArch arch;
    arch.channels = a.at("channels").get<int>();
    arch.blocks = a.at("blocks").get<int>();
    arch.fourier_features = a.at("fourier_features").get<int>();
    arch.fourier_sigma = a.at("fourier_sigma").get<double>();
    arch.dilation_cycle = a.at("dilation_cycle").get<std::vector<int>>();
    const auto& s = header.at("schedule");
    auto sched = NoiseSchedule::linear(s.at("steps").get<int>(), s.at("beta_min").get<double>(),
                                       s.at("beta_max").get<double>());
    auto freqs = header.at("fourier_frequencies").get<std::vector<double>>();
    const auto count = header.at("param_count").get<std::size_t>();
    if (count > (std::size_t{1} << 28)) throw FormatError(path.string() + ": implausible size");
    std::vector<float> params(count);
    in.read(reinterpret_cast<char*>(params.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw FormatError(path.string() + ": truncated parameter block");
    return ToyDenoiser(std::move(arch), std::move(sched), std::move(freqs), std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": malformed checkpoint header (" + e.what() + ")");
  } catch (const ConfigError& e) {
    throw FormatError(path.string() + ": inconsistent checkpoint (" + e.what() + ")");
  }
}

}  // namespace postdiff
