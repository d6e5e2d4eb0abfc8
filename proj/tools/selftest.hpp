#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace parisi::selftest {

struct Options {
    std::vector<int> only;    // empty runs criteria 1-11
    int workers = 1;
    std::string scratch_dir;  // empty picks a directory under the system temp path
};

/// Runs the acceptance criteria, one PASS/FAIL line each. Returns 0 iff all selected pass.
int run(const Options& opt, std::ostream& out);

}  // namespace parisi::selftest
