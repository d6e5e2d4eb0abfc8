#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "selftest.hpp"

int main(int argc, char** argv) {
    using namespace parisi;
    CLI::App app{"parisi-lab: Parisi PDE, cascades, characteristics and RSB structure checks"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed = 0;
    int workers = 1;
    double budget_scale = 1.0;

    std::vector<CLI::App*> subs;
    for (const std::string& name : cli::command_names()) {
        CLI::App* sub = app.add_subcommand(name, "run " + name + " on a JSON config");
        sub->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "seed (overrides the config)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--budget-scale", budget_scale, "multiplier on Monte Carlo budgets")
            ->check(CLI::PositiveNumber);
        subs.push_back(sub);
    }
    CLI::App* self = app.add_subcommand("selftest", "run the acceptance suite");
    selftest::Options st;
    self->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    self->add_option("--only", st.only, "run only these criteria (1-11)");
    self->add_option("--out", out_dir, "scratch directory for the determinism check");

    CLI11_PARSE(app, argc, argv);

    if (self->parsed()) {
        st.workers = workers;
        st.scratch_dir = out_dir == "." ? "" : out_dir;
        return selftest::run(st, std::cout);
    }
    for (CLI::App* sub : subs) {
        if (!sub->parsed()) continue;
        cli::RunOptions opt;
        opt.out_dir = out_dir;
        opt.workers = workers;
        opt.budget_scale = budget_scale;
        if (sub->count("--seed")) opt.seed = seed;
        std::ifstream f(config_path, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        opt.config_text = ss.str();
        Json cfg;
        try {
            cfg = Json::parse(opt.config_text);
        } catch (const Json::parse_error& e) {
            std::cerr << "config error at /: malformed JSON: " << e.what() << "\n";
            return cli::kConfigError;
        }
        return cli::run_command(sub->get_name(), cfg, opt, std::cerr);
    }
    return cli::kFailed;
}
