#include <string>
#include <vector>

#include "stockrl/cli.hpp"

int main(int argc, char** argv) {
  return stockrl::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
