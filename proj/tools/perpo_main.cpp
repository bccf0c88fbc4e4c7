#include <vector>
#include <string>

#include "perpo/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return perpo::cli::run(args);
}
