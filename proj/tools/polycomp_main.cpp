#include <iostream>

#include "polycomp/cli.hpp"

int main(int argc, char** argv) { return polycomp::run_cli(argc, argv, std::cout, std::cerr); }
