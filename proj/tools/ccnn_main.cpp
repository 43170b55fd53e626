#include <string>
#include <vector>

#include "ccnn/cli.hpp"

int main(int argc, char** argv) {
  return ccnn::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
