#include <iostream>

#include "tiered/cli.hpp"

int main(int argc, char** argv) { return tiered::run_cli(argc, argv, std::cout, std::cerr); }
