#include <iostream>

#include "scala/cli/cli.hpp"

int main(int argc, char** argv) {
    return scala::cli::run(argc, argv, std::cout, std::cerr);
}
