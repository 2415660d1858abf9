#include <iostream>
#include <string>
#include <vector>

#include "xrl/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return xrl::run(args, std::cout, std::cerr);
}
