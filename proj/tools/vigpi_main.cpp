#include <iostream>
#include <string>
#include <vector>

#include "vigpi/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return vigpi::execute_command(std::move(args), std::cout, std::cerr);
}
