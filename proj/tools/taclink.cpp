#include <iostream>

#include "taclink/cli.hpp"

int main(int argc, char** argv) { return taclink::cli::dispatch(argc, argv, std::cout, std::cerr); }
