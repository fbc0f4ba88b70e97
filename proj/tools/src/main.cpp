#include <iostream>
#include <string>
#include <vector>

#include "handcast_cli/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return handcast::cli::run(args, std::cout, std::cerr);
}
