#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const fs::path kConfigs = PARISI_LAB_CONFIG_DIR;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "parisi-lab-cli-tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

struct Run {
    int code = -1;
    std::string err;
};

Run run(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(PARISI_LAB_CLI_PATH) + " " + args + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
}

Json read(const fs::path& p) { return Json::parse(slurp(p)); }

}  // namespace

TEST_CASE("psi on Ising with q = 0 is zero") {
    const fs::path out = scratch("psi0");
    const Run r = run("psi --config " + (kConfigs / "psi_ising_zero.json").string() + " --out " + out.string(), out);
    REQUIRE(r.code == 0);
    const Json res = read(out / "result.json");
    CHECK(res["psi"].get<double>() == 0.0);
    CHECK(slurp(out / "result.json").find("\"psi\": 0\n") != std::string::npos);
    const Json m = read(out / "manifest.json");
    CHECK(m["command"] == "psi");
    CHECK(m["seed"] == 1);
    CHECK(m["config_hash"].get<std::string>().size() == 16);
    CHECK(m["outputs"].size() == 1);
}

TEST_CASE("decompose on the D=2 diagonal example") {
    const fs::path out = scratch("decompose");
    REQUIRE(run("decompose --config " + (kConfigs / "decompose_d2.json").string() + " --out " + out.string(), out)
                .code == 0);
    const Json res = read(out / "result.json");
    CHECK(res["decomposition"]["T"].get<double>() == doctest::Approx(0.4));
    CHECK(res["residual"].get<double>() <= 1e-12);
    const std::string knots = slurp(out / "knots.csv");
    CHECK(knots.find("1,0.40000000000000002,1,1,0.10000000000000001") != std::string::npos);
    CHECK(knots.find("1,0.40000000000000002,2,2,0.29999999999999999") != std::string::npos);
}

TEST_CASE("config errors exit with code 2 and a pointer") {
    const fs::path out = scratch("errors");
    const auto check = [&](const std::string& text, const std::string& pointer) {
        const fs::path cfg = write_config(out, text);
        const Run r = run("psi --config " + cfg.string() + " --out " + (out / "o").string(), out);
        CHECK(r.code == 2);
        CHECK_MESSAGE(r.err.find(pointer) != std::string::npos, r.err);
    };
    const std::string q = R"("q": {"dim": 1, "breakpoints": [0], "values": [[0.1]]})";
    check(R"({"mu": {"kind": "ising"}, )" + q + "}", "/seed");
    check(R"({"seed": -1, "mu": {"kind": "ising"}, )" + q + "}", "/seed");
    check(R"({"seed": 1, "mu": {"kind": "ising"}, "bogus": 1, )" + q + "}", "/bogus");
    check(R"({"seed": 1, "mu": {"kind": "potts"}, )" + q + "}", "/mu/kind");
    check(R"({"seed": 1, "mu": {"kind": "ising"}, "q": {"dim": 1, "breakpoints": [0, 0.5], "values": [[0.4], [0.1]]}})",
          "/q");
    check(R"({"seed": 1, "mu": {"kind": "ising"}, )" + q + R"(, "grid": {"cells": 64, "nodes": 3}})", "/grid/nodes");
    check(R"({"seed": 1, "mu": )", "/");
}

TEST_CASE("seed flag overrides the config seed") {
    const fs::path out = scratch("seed");
    REQUIRE(run("psi --config " + (kConfigs / "psi_ising_zero.json").string() + " --seed 99 --out " + out.string(),
                out)
                .code == 0);
    CHECK(read(out / "manifest.json")["seed"] == 99);
}

TEST_CASE("numeric failures exit with code 3 and write diagnostics") {
    const fs::path out = scratch("numeric");
    const fs::path cfg = write_config(out, R"({"seed": 1, "mu": {"kind": "ising"},
        "q": {"dim": 1, "breakpoints": [0, 0.5], "values": [[0.1], [0.3]]},
        "grid": {"cells": 32, "x_max": 2.0}, "points": [[0.0, 50.0]]})");
    const Run r = run("solve-pde --config " + cfg.string() + " --out " + out.string(), out);
    CHECK(r.code == 3);
    CHECK(fs::exists(out / "diagnostics.json"));
    CHECK(read(out / "diagnostics.json")["command"] == "solve-pde");
}

TEST_CASE("repeated runs are byte-identical") {
    const fs::path a = scratch("repeat_a"), b = scratch("repeat_b");
    const fs::path cfg = write_config(a, R"({"seed": 5, "mu": {"kind": "ising", "p_plus": 0.6},
        "q": {"dim": 1, "breakpoints": [0, 0.4], "values": [[0.2], [0.6]]},
        "characteristics": {"n_paths": 2000, "dt_rel": 0.004}})");
    REQUIRE(run("characteristics --config " + cfg.string() + " --out " + a.string(), a).code == 0);
    REQUIRE(run("characteristics --config " + cfg.string() + " --workers 3 --out " + b.string(), b).code == 0);
    CHECK(slurp(a / "result.json") == slurp(b / "result.json"));
    CHECK(slurp(a / "ensemble.csv") == slurp(b / "ensemble.csv"));
}

TEST_CASE("budget scale shrinks Monte Carlo budgets") {
    const fs::path out = scratch("budget");
    const Run r = run("psi --config " + (kConfigs / "psi_two_level.json").string() + " --budget-scale 0.05 --out " +
                          out.string(),
                      out);
    REQUIRE(r.code == 0);
    CHECK(read(out / "result.json")["mc_psi"]["reps"] == 20);
}

TEST_CASE("rsb-report on the fully coupled model reports simultaneous breaking") {
    const fs::path out = scratch("rsb");
    const Run r =
        run("rsb-report --config " + (kConfigs / "rsb_coupled_d2.json").string() + " --out " + out.string(), out);
    REQUIRE(r.code == 0);
    const Json res = read(out / "result.json");
    CHECK(res["critical_point"]["converged"] == true);
    CHECK(res["simultaneous"] == true);
    CHECK(res["report"]["nonzero"].get<int>() >= 1);
    CHECK(fs::exists(out / "pairs.csv"));
}
