#include <iostream>

#include "mac/commands.hpp"

int main(int argc, char** argv) { return mac::run_cli(argc, argv, std::cout, std::cerr); }
