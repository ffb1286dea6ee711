#pragma once

#include <string>
#include <vector>

#include "postdiff/config.hpp"

namespace postdiff::cli {

struct Command {
  std::string name;
  std::string help;
  int (*run)(const Config&);
};

/// Exit status: 0 ok, 1 failed check, 2 config error, 3 I/O or format error,
/// 4 numeric failure.
const std::vector<Command>& commands();

}  // namespace postdiff::cli
