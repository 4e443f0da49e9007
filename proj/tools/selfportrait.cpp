#include <iostream>

#include "selfportrait/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return selfportrait::run_cli(args, std::cout, std::cerr);
}
