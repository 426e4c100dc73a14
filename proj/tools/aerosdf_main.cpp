#include <iostream>

#include "aerosdf/cli.hpp"

int main(int argc, char** argv) {
  return aerosdf::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
