#include <iostream>

#include "ug/cli.hpp"

int main(int argc, char** argv) {
  return ug::execute({argv + 1, argv + argc}, std::cin, std::cout, std::cerr);
}
