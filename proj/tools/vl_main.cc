#include <iostream>
#include <string>
#include <vector>

#include "vl/cli/commands.h"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return vl::cli::run(args, std::cout, std::cerr);
}
