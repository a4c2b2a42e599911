#include <iostream>
#include <string>
#include <vector>

#include "seltune/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return seltune::run_cli(args, std::cout, std::cerr);
}
