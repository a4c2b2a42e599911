#pragma once

// Operator surface. Subcommands: label, split, train, eval, params,
// plot-data, tokenize (debug), init (random checkpoint writer). Exit status
// 0 on success, nonzero with a single-line `error[<category>]: <message>`
// on stderr otherwise. Categories: config (2), io (3), data (4),
// checkpoint (5), internal (1).

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace seltune {

struct CliError : std::runtime_error {
  CliError(std::string category_, int exit_code_, const std::string& message)
      : std::runtime_error(message),
        category(std::move(category_)),
        exit_code(exit_code_) {}
  std::string category;
  int exit_code;
};

inline CliError config_error(const std::string& m) { return {"config", 2, m}; }
inline CliError io_error(const std::string& m) { return {"io", 3, m}; }
inline CliError data_error(const std::string& m) { return {"data", 4, m}; }
inline CliError checkpoint_error(const std::string& m) {
  return {"checkpoint", 5, m};
}

// Runs one command in-process. `args` excludes the program name. The default
// config file path comes from the SELTUNE_CONFIG environment variable when
// --config is not given.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace seltune
