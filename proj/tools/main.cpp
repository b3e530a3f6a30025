#include <iostream>
#include <string>
#include <vector>

#include "gofl/cli.hpp"

int main(int argc, char** argv) {
  return gofl::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
