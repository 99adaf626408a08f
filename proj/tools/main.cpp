#include <string>
#include <vector>

#include "qbnn/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return qbnn::cli::run(args);
}
