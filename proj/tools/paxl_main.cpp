#include <string>
#include <vector>

#include "paxl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return paxl::cli::run(args);
}
