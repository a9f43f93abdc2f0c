#include <iostream>

#include "grunt/cli.hpp"

int main(int argc, char** argv) {
  return grunt::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
