#include <iostream>
#include <string>
#include <vector>

#include "cts/cli.hpp"
#include "cts/runtime.hpp"

int main(int argc, char** argv) {
  cts::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return cts::run_cli(args, std::cout, std::cerr);
}
