#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include "commands.hpp"
#include "postdiff/error.hpp"

int main(int argc, char** argv) {
  using namespace postdiff;
  CLI::App app{"postdiff: diffusion posterior sampling for 1-D audio inverse problems"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "list every configuration key");

  struct Invocation {
    std::string config_file;
    bool dump = false;
    std::map<std::string, std::string> overrides;
  };
  std::map<std::string, Invocation> inv;
  std::map<std::string, std::map<std::string, CLI::Option*>> opts;

  for (const auto& cmd : cli::commands()) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    auto& state = inv[cmd.name];
    sub->add_option("-c,--config", state.config_file, "configuration file")->check(CLI::ExistingFile);
    sub->add_flag("--print-config", state.dump, "print the effective configuration and exit");
    for (const auto& key : config_keys()) {
      auto* o = sub->add_option("--" + key.name, state.overrides[key.name], key.help);
      o->default_str(key.default_value)->group("Configuration keys");
      opts[cmd.name][key.name] = o;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  for (const auto& cmd : cli::commands()) {
    auto* sub = app.get_subcommand(cmd.name);
    if (!sub->parsed()) continue;
    const auto& state = inv[cmd.name];
    try {
      Config cfg;
      if (!state.config_file.empty()) cfg.load_file(state.config_file);
      for (const auto& [key, opt] : opts[cmd.name])
        if (opt->count() > 0) cfg.set(key, state.overrides.at(key));
      if (state.dump) {
        std::cout << cfg.dump();
        return 0;
      }
      return cmd.run(cfg);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    } catch (const FormatError& e) {
      std::cerr << "I/O error: " << e.what() << '\n';
      return 3;
    } catch (const std::filesystem::filesystem_error& e) {
      std::cerr << "I/O error: " << e.what() << '\n';
      return 3;
    } catch (const NumericError& e) {
      std::cerr << "numeric failure: " << e.what() << '\n';
      return 4;
    }
  }
  return 2;
}
