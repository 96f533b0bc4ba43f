#include <iostream>

#include "abthmm/cli.hpp"

int main(int argc, char** argv) { return abthmm::cli_dispatch(argc, argv, std::cout, std::cerr); }
