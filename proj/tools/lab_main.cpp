#include <string>
#include <vector>

#include "lab/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return lab::cli::main_entry(args);
}
