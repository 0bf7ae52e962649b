#include <iostream>

#include "gmlevel/cli.hpp"

int main(int argc, char** argv) { return gmlevel::cli::run(argc, argv, std::cout, std::cerr); }
