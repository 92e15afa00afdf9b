#include <iostream>

#include "spqkd/cli.hpp"

int main(int argc, char** argv) { return spqkd::cli::run(argc, argv, std::cout, std::cerr); }
