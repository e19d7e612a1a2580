#include "evojudge/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return evojudge::run_cli(argc, argv, std::cout, std::cerr); }
