#include <iostream>

#include "crbm/cli.hpp"

int main(int argc, char** argv) { return crbm::run_cli(argc, argv, std::cout, std::cerr); }
