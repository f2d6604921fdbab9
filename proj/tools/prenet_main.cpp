#include <iostream>
#include <string>
#include <vector>

#include "prenet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return prenet::cli::run(args, std::cout, std::cerr);
}
