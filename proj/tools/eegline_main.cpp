#include <string>
#include <vector>

#include "eegline/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eegline::cli::cli_dispatch(args);
}
