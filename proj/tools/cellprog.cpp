#include <iostream>

#include "cellprog/cli.hpp"

int main(int argc, char** argv) { return cellprog::run_cli(argc, argv, std::cout, std::cerr); }
