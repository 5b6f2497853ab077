#include <iostream>

#include "catsim/cli.hpp"

int main(int argc, char** argv) { return catsim::run_cli(argc, argv, std::cout, std::cerr); }
