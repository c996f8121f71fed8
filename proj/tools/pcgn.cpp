#include <iostream>

#include "pcgn/cli.hpp"

int main(int argc, char** argv) { return pcgn::run_cli(argc, argv, std::cout, std::cerr); }
