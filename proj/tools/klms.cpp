#include <iostream>

#include "klms/cli/commands.hpp"

int main(int argc, char** argv) { return klms::cli::run(argc, argv, std::cout, std::cerr); }
