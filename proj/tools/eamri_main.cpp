#include <string>
#include <vector>

#include "eamri/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eamri::cli::main(std::move(args));
}
