#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "postdiff/config.hpp"
#include "postdiff/error.hpp"

using namespace postdiff;

TEST_CASE("defaults describe the standard setup") {
  const Config cfg;
  const auto s = schedule_from(cfg);
  CHECK(s == NoiseSchedule::linear(200, 1e-4, 0.02));
  const auto arch = arch_from(cfg);
  CHECK(arch.dilation_cycle == std::vector<int>{1, 2, 4, 8});
  CHECK(lowpass_from(cfg).cutoff_hz == 2000.0);
  CHECK(mel_from(cfg).n_mels == 80);
  CHECK(cfg.get_int("run.length") == 8000);
  const auto g = guidance_from(cfg, Task::Declip);
  CHECK(g.mode == GuidanceMode::Reconstruction);
  CHECK(g.xi0 == default_xi0(Task::Declip));
  CHECK(guidance_from(cfg, Task::Bwe).mode == GuidanceMode::Imputation);
  CHECK(guidance_from(cfg, Task::Separate).mode == GuidanceMode::Separation);
}

TEST_CASE("parsing sections, comments and whitespace") {
  Config cfg;
  cfg.parse_text(R"(
# comment
[schedule]
steps = 50   
beta_max=0.05 ; trailing comment
[guidance]
xi0 = 3.5
mode = none
[model]
dilations = 1, 3 ,9
)");
  CHECK(cfg.get_int("schedule.steps") == 50);
  CHECK(cfg.get_double("schedule.beta_max") == 0.05);
  CHECK(cfg.get_int_list("model.dilations") == std::vector<int>{1, 3, 9});
  const auto g = guidance_from(cfg, Task::Bwe);
  CHECK(g.mode == GuidanceMode::None);
  CHECK(g.xi0 == 3.5);
}

TEST_CASE("invalid configuration is rejected") {
  Config cfg;
  CHECK_THROWS_AS(cfg.parse_text("[schedule]\nnot_a_key = 3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.parse_text("steps = 3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.parse_text("[schedule\nsteps = 3\n"), ConfigError);
  CHECK_THROWS_AS(cfg.parse_text("[schedule]\nsteps\n"), ConfigError);
  CHECK_THROWS_AS(cfg.set("nope.key", "1"), ConfigError);
  cfg.set("schedule.steps", "twelve");
  CHECK_THROWS_AS(cfg.get_int("schedule.steps"), ConfigError);
  cfg.set("schedule.steps", "12.5");
  CHECK_THROWS_AS(cfg.get_int("schedule.steps"), ConfigError);
  cfg.set("schedule.steps", "0");
  CHECK_THROWS_AS(schedule_from(cfg), ConfigError);
  Config c2;
  c2.set("guidance.mode", "bogus");
  CHECK_THROWS_AS(guidance_from(c2, Task::Bwe), ConfigError);
  Config c3;
  c3.set("guidance.variance", "huge");
  CHECK_THROWS_AS(guidance_from(c3, Task::Bwe), ConfigError);
  Config c4;
  c4.set("guidance.xi0", "-1");
  CHECK_THROWS_AS(guidance_from(c4, Task::Bwe), ConfigError);
  Config c5;
  c5.set("operator.cutoff_hz", "9000");
  CHECK_THROWS_AS(lowpass_from(c5), ConfigError);
  CHECK_THROWS_AS(Config().get_bool("nothing.here"), ConfigError);
}

TEST_CASE("dump round-trips through the parser") {
  Config a;
  a.set("train.batch_size", "3");
  a.set("run.input", "some file.wav");
  Config b;
  b.parse_text(a.dump());
  CHECK(b.dump() == a.dump());
  CHECK(b.get_int("train.batch_size") == 3);
  CHECK(b.get("run.input") == "some file.wav");
}

TEST_CASE("config files load from disk") {
  const auto path = std::filesystem::temp_directory_path() / "postdiff_config_test.ini";
  {
    std::ofstream out(path);
    out << "[run]\nseed = 42\n";
  }
  Config cfg;
  cfg.load_file(path);
  CHECK(cfg.get_u64("run.seed") == 42u);
  CHECK_THROWS_AS(cfg.load_file(path.string() + ".missing"), FormatError);
}

TEST_CASE("booleans") {
  Config cfg;
  for (const char* t : {"true", "1", "yes", "on"}) {
    cfg.set("run.eval", t);
    CHECK(cfg.get_bool("run.eval"));
  }
  for (const char* f : {"false", "0", "no", "off"}) {
    cfg.set("run.eval", f);
    CHECK_FALSE(cfg.get_bool("run.eval"));
  }
  cfg.set("run.eval", "maybe");
  CHECK_THROWS_AS(cfg.get_bool("run.eval"), ConfigError);
}
