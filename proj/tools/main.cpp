#include <iostream>

#include "neurongauge/cli.hpp"

int main(int argc, char** argv) { return ngauge::run_cli(argc, argv, std::cout, std::cerr); }
