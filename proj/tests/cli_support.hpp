#pragma once

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "kcheck/cli.hpp"

namespace kcheck::testing {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliResult run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// Fixed manifest timestamps, so reruns can be compared byte for byte.
inline void pin_source_date() { ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1); }

}  // namespace kcheck::testing
