#include <iostream>

#include "aal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return aal::run_cli(args, std::cout, std::cerr);
}
