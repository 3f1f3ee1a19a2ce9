#include <iostream>
#include <string>
#include <vector>

#include "repsim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return repsim::cli::dispatch(args, std::cout, std::cerr);
}
