#include <iostream>

#include "zsad/cli.hpp"

int main(int argc, char** argv) { return zsad::run_cli(argc, argv, std::cout, std::cerr); }
