#include <string>
#include <vector>

#include "hrl/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string self_exe = "/proc/self/exe";
  return hrl::cli::run_main(std::move(args), self_exe);
}
