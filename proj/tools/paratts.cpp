#include <iostream>

#include "paratts/cli.hpp"

int main(int argc, char** argv) {
  return paratts::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
