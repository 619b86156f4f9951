#include <string>
#include <vector>

#include "fairlm/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fairlm::RunCli(args);
}
