// Command-line entry point. All behavior lives in the core library so the
// dispatch logic is testable without spawning processes.

#include <iostream>
#include <string>
#include <vector>

#include "epistwin/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return epistwin::run_cli(args, std::cout, std::cerr);
}
