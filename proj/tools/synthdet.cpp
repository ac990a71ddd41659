#include <iostream>

#include "synthdet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return synthdet::cli::run(args, std::cout, std::cerr).exit_code;
}
