#include <iostream>

#include "spws/cli.hpp"

int main(int argc, char** argv) { return spws::run_cli(argc, argv, std::cout, std::cerr); }
