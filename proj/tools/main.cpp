#include <iostream>

#include "dbpeq/cli.hpp"

int main(int argc, char** argv) { return dbpeq::cli_main(argc, argv, std::cout, std::cerr); }
