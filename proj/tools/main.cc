#include <iostream>

#include "sca_aec/cli.h"

int main(int argc, char** argv) {
  return sca_aec::RunCli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
