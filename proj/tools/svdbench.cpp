#include "tsvd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return tsvd::cli::svdbench_main(argc, argv, std::cout, std::cerr); }
