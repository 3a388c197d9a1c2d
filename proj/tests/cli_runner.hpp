// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runs the built trainscan binary and captures what it prints.

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace cli_runner {

struct Run {
    int status = -1;
    std::string out; ///< stdout and stderr
};

inline Run run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + TRAINSCAN_CLI_PATH + " " + args + " 2>&1";
    Run r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (std::size_t n = fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int st = pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace cli_runner
