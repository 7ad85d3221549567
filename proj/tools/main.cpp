#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return glioma::cli::run(argc, argv, std::cout, std::cerr); }
