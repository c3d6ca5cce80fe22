#include <iostream>
#include <string>
#include <vector>

#include "smoothcert/cli.hpp"

int main(int argc, char** argv) {
    std::ios::sync_with_stdio(false);
    const std::vector<std::string> args(argv + 1, argv + argc);
    return smoothcert::cli::dispatch(args, std::cout, std::cerr);
}
