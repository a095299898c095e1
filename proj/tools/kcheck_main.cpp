#include <iostream>
#include <string>
#include <vector>

#include "kcheck/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return kcheck::run_cli(args, std::cout, std::cerr);
}
