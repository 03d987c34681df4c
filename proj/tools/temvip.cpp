#include "temvip/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return temvip::run_cli(argc, argv, std::cout, std::cerr); }
