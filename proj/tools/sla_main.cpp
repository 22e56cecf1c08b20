#include <iostream>
#include <string>
#include <vector>

#include "sla/cli.hpp"

int main(int argc, char** argv) {
  return sla::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
