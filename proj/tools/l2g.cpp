#include <iostream>

#include "l2g/commands.hpp"

int main(int argc, char** argv) { return l2g::run_cli(argc, argv, std::cout, std::cerr); }
