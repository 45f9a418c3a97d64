#include <iostream>
#include <string>
#include <vector>

#include "dtr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dtr::cli::run(args, std::cout, std::cerr);
}
