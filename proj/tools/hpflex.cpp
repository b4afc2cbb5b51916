#include <iostream>

#include "hpflex/cli.hpp"

int main(int argc, char** argv) { return hpflex::cli::run(argc, argv, std::cout, std::cerr); }
