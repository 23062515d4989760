#include <iostream>
#include <string>
#include <vector>

#include "ladder/pipeline.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ladder::run_command(args, std::cout, std::cerr);
}
