#include <iostream>

#include "cavcon/cli.hpp"

int main(int argc, char** argv) {
  return cavcon::cli::run_cli(argc, argv, std::cout, std::cerr);
}
