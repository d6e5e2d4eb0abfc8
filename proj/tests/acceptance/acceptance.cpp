#include <iostream>

#include "CLI11.hpp"
#include "selftest.hpp"

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria 1-11"};
    parisi::selftest::Options opt;
    app.add_option("--only", opt.only, "run only these criteria");
    app.add_option("--workers", opt.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--scratch", opt.scratch_dir, "scratch directory for the determinism check");
    CLI11_PARSE(app, argc, argv);
    return parisi::selftest::run(opt, std::cout);
}
