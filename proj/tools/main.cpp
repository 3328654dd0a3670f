#include "cpcl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return cpcl::run_cli(argc, argv, std::cout, std::cerr); }
