#include <iostream>
#include <string>
#include <vector>

#include "stepbcd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stepbcd::run_cli(args, std::cout, std::cerr);
}
