#include <iostream>

#include "hspline/cli.hpp"

int main(int argc, char** argv) { return hspline::run_cli(argc, argv, std::cout, std::cerr); }
