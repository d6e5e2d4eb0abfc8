#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "parisi/parallel.hpp"
#include "parisi/rng.hpp"

namespace fs = std::filesystem;

namespace parisi::cli {

namespace {

const char* const kTopKeys[] = {"operation", "seed",     "mu",       "xi",       "model",     "q",
                                "p_init",    "t",        "x0",       "grid",     "characteristics",
                                "grad_psi",  "cascade",  "reps",     "critical", "directions",
                                "jump_at",   "points",   "coupling_samples"};

[[noreturn]] void bad(const std::string& ptr, const std::string& what) { throw ConfigError(ptr, what); }

const Json& need(const Json& cfg, const char* key) {
    auto it = cfg.find(key);
    if (it == cfg.end()) bad(std::string("/") + key, "missing required field");
    return *it;
}

double get_num(const Json& j, const std::string& ptr) {
    if (!j.is_number()) bad(ptr, "expected a number");
    return j.get<double>();
}

int get_int(const Json& j, const std::string& ptr) {
    if (!j.is_number_integer()) bad(ptr, "expected an integer");
    return j.get<int>();
}

int scaled(int n, double scale, int floor_value) {
    return std::max(floor_value, static_cast<int>(std::lround(n * scale)));
}

struct Context {
    const Json& cfg;
    const RunOptions& opt;
    std::uint64_t seed = 0;
    std::vector<std::string> written;

    fs::path path(const std::string& name) const { return fs::path(opt.out_dir) / name; }
    void json(const std::string& name, const Json& j) {
        write_json(path(name).string(), j);
        written.push_back(name);
    }
    void csv(const std::string& name, const CsvTable& t) {
        write_text(path(name).string(), t.str());
        written.push_back(name);
    }
    void f64(const std::string& name, const std::vector<double>& v) {
        write_f64(path(name).string(), v);
        written.push_back(name);
    }

    SpinMeasure mu() const { return spin_measure_from_json(need(cfg, "mu"), "/mu"); }
    XiModel xi() const { return xi_from_json(need(cfg, "xi"), "/xi"); }
    StepPath path_at(const char* key) const { return step_path_from_json(need(cfg, key), std::string("/") + key); }
    GridSpec grid() const { return cfg.contains("grid") ? grid_spec_from_json(cfg["grid"], "/grid") : GridSpec{}; }

    CharOptions ch() const {
        CharOptions o = cfg.contains("characteristics")
                            ? char_options_from_json(cfg["characteristics"], "/characteristics")
                            : CharOptions{};
        o.n_paths = scaled(o.n_paths, opt.budget_scale, 2);
        return o;
    }
    GradPsiOptions gp(const Json* j, const std::string& ptr) const {
        GradPsiOptions o = j ? grad_psi_options_from_json(*j, ptr) : GradPsiOptions{};
        if (!j || !j->contains("grid")) o.grid = grid();
        if (!j || !j->contains("characteristics")) o.ch = ch();
        else o.ch.n_paths = scaled(o.ch.n_paths, opt.budget_scale, 2);
        return o;
    }
    GradPsiOptions gp() const { return gp(cfg.contains("grad_psi") ? &cfg["grad_psi"] : nullptr, "/grad_psi"); }

    CriticalOptions critical() const {
        CriticalOptions o;
        o.inner = gp();
        o.inner.fd_check = false;
        o.final_eval = gp();
        if (!cfg.contains("critical")) return o;
        const Json& c = cfg["critical"];
        if (!c.is_object()) bad("/critical", "expected an object");
        for (auto it = c.begin(); it != c.end(); ++it) {
            const std::string k = it.key(), ptr = "/critical/" + k;
            if (k == "damping") o.damping = get_num(*it, ptr);
            else if (k == "tol") o.tol = get_num(*it, ptr);
            else if (k == "max_iter") o.max_iter = get_int(*it, ptr);
            else if (k == "inner") o.inner = gp(&*it, ptr);
            else if (k == "final") o.final_eval = gp(&*it, ptr);
            else bad(ptr, "unknown field");
        }
        if (!(o.damping > 0.0 && o.damping <= 1.0)) bad("/critical/damping", "must lie in (0, 1]");
        if (!(o.tol > 0.0)) bad("/critical/tol", "must be positive");
        if (o.max_iter < 1) bad("/critical/max_iter", "must be >= 1");
        return o;
    }
    int reps(int def) const {
        const int r = cfg.contains("reps") ? get_int(cfg["reps"], "/reps") : def;
        if (r < 2) bad("/reps", "must be >= 2");
        return scaled(r, opt.budget_scale, 2);
    }
    CascadeOptions cascade() const {
        return cfg.contains("cascade") ? cascade_options_from_json(cfg["cascade"], "/cascade") : CascadeOptions{};
    }
    double t() const {
        const double v = get_num(need(cfg, "t"), "/t");
        if (!(v >= 0.0)) bad("/t", "must be >= 0");
        return v;
    }
};

std::vector<double> packed_grid(const FieldGrid& g) { return g.data; }

// ---- subcommands -------------------------------------------------------

void cmd_psi(Context& c) {
    const SpinMeasure mu = c.mu();
    const StepPath q = c.path_at("q");
    const GridSpec grid = c.grid();
    Json r;
    double psi = 0.0;
    bool cached = false;
    std::string cache_file;
    if (const char* dir = std::getenv("PARISI_LAB_CACHE"); dir && *dir) {
        Json key;
        key["mu"] = to_json(mu);
        key["q"] = to_json(q);
        key["grid"] = Json{{"cells", grid.cells}, {"x_max", grid.x_max}, {"gh_nodes", grid.gh_nodes}};
        cache_file = (fs::path(dir) / ("psi-" + content_hash(dump_json(key, -1)) + ".json")).string();
        std::ifstream f(cache_file);
        if (f) {
            const Json j = Json::parse(f, nullptr, false);
            if (j.is_object() && j.contains("psi") && j["psi"].is_number()) {
                psi = j["psi"].get<double>();
                cached = true;
            }
        }
    }
    if (!cached) {
        psi = psi_value(mu, q, grid);
        if (!cache_file.empty()) {
            fs::create_directories(fs::path(cache_file).parent_path());
            write_json(cache_file, Json{{"psi", psi}});
        }
    }
    r["psi"] = psi;
    if (c.cfg.contains("reps")) r["mc_psi"] = to_json(mc_psi(mu, q, c.reps(400), c.cascade(), c.seed));
    c.json("result.json", r);
}

void cmd_decompose(Context& c) {
    const StepPath q = c.path_at("q");
    const Decomposition d = canonical_decomposition(q);
    Json r;
    r["decomposition"] = to_json(d);
    std::vector<double> s;
    for (std::size_t k = 1; k < q.breakpoints.size(); ++k) s.push_back(q.breakpoints[k]);
    s.push_back(1.0);
    r["residual"] = decomposition_residual(q, d, s);
    c.json("result.json", r);
    CsvTable t;
    t.header = {"knot", "t", "i", "j", "L"};
    for (std::size_t k = 0; k < d.L.knots.size(); ++k)
        for (int i = 0; i < q.dim; ++i)
            for (int j = 0; j < q.dim; ++j)
                t.add({std::to_string(k), format_double(d.L.knots[k]), std::to_string(i + 1), std::to_string(j + 1),
                       format_double(d.L.values[k](i, j))});
    c.csv("knots.csv", t);
}

void cmd_solve_pde(Context& c) {
    const SpinMeasure mu = c.mu();
    const StepPath q = c.path_at("q");
    const Decomposition d = canonical_decomposition(q);
    if (d.empty) bad("/q", "the zero path has no PDE domain (T = 0); use psi");
    const ParisiSolution sol = solve_parisi(mu, d, c.grid());
    Json r;
    r["solution"] = solution_meta(sol);
    r["psi"] = -sol.eval(0.0, Vec::Zero(mu.dim)).value;
    Json dumps = Json::array();
    for (std::size_t j = 0; j < sol.grids.size(); ++j) {
        if (sol.grids[j].data.empty()) continue;
        const std::string name = "field_" + std::to_string(j) + ".f64";
        c.f64(name, packed_grid(sol.grids[j]));
        dumps.push_back(Json{{"file", name}, {"t", sol.grids[j].t}});
    }
    r["dumps"] = dumps;
    c.json("result.json", r);
    if (c.cfg.contains("points")) {
        const Json& pts = c.cfg["points"];
        if (!pts.is_array()) bad("/points", "expected an array of [t, x...] rows");
        CsvTable t;
        t.header = {"t"};
        for (int i = 0; i < mu.dim; ++i) t.header.push_back("x" + std::to_string(i + 1));
        t.header.push_back("phi");
        t.header.push_back("residual");
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const std::string ptr = "/points/" + std::to_string(k);
            const Vec row = vec_from_json(pts[k], mu.dim + 1, ptr);
            const double tt = row(0);
            if (!(tt >= 0.0 && tt <= sol.T())) bad(ptr + "/0", "t must lie in [0, T]");
            const Vec x = row.tail(mu.dim);
            std::vector<std::string> line{format_double(tt)};
            for (int i = 0; i < mu.dim; ++i) line.push_back(format_double(x(i)));
            line.push_back(format_double(sol.eval(tt, x).value));
            line.push_back(tt > 0.0 && tt < sol.T() ? format_double(pde_residual(sol, tt, x)) : "");
            t.add(line);
        }
        c.csv("points.csv", t);
    }
}

void cmd_characteristics(Context& c) {
    const SpinMeasure mu = c.mu();
    const StepPath q = c.path_at("q");
    const Decomposition d = canonical_decomposition(q);
    if (d.empty) bad("/q", "the zero path has no PDE domain (T = 0)");
    const ParisiSolution sol = solve_parisi(mu, d, c.grid());
    const X0Spec x0 = c.cfg.contains("x0") ? X0Spec::fixed(vec_from_json(c.cfg["x0"], mu.dim, "/x0"))
                                           : X0Spec::fixed(Vec::Zero(mu.dim));
    const CharacteristicEnsemble ens = simulate(sol, x0, c.ch(), c.seed);
    Json r;
    r["paths"] = ens.units * ens.paths_per_unit;
    r["T"] = ens.T;
    r["record_times"] = ens.record_times;
    r["max_grad_norm"] = ens.max_grad_norm;
    r["max_atom_norm"] = mu.max_norm();
    r["R_identity"] = to_json(check_R_identity(ens));
    c.json("result.json", r);
    c.csv("ensemble.csv", ensemble_csv(ens));
}

void cmd_grad_psi(Context& c) {
    const SpinMeasure mu = c.mu();
    const StepPath q = c.path_at("q");
    const GradPsiResult g = grad_psi(mu, q, c.gp(), c.seed);
    c.json("result.json", to_json(g));
}

CriticalPoint run_critical(Context& c, const SpinMeasure& mu, const XiModel& xi) {
    const StepPath q = c.path_at("q");
    const StepPath p0 = c.cfg.contains("p_init") ? c.path_at("p_init") : StepPath::zero(q.dim);
    return find_critical_point(c.t(), q, mu, xi, p0, c.critical(), c.seed);
}

void cmd_critical(Context& c) {
    const SpinMeasure mu = c.mu();
    const XiModel xi = c.xi();
    const CriticalPoint cp = run_critical(c, mu, xi);
    Json r;
    r["critical_point"] = to_json(cp);
    r["J"] = evaluate_J(cp.t, cp.q, cp.qprime, cp.p, mu, xi, c.critical().final_eval.grid);
    if (c.cfg.contains("jump_at")) {
        Json jumps = Json::array();
        const Json& ja = c.cfg["jump_at"];
        if (!ja.is_array()) bad("/jump_at", "expected an array of s values");
        for (std::size_t k = 0; k < ja.size(); ++k) {
            const double s = get_num(ja[k], "/jump_at/" + std::to_string(k));
            if (!(s > 0.0 && s < 1.0)) bad("/jump_at/" + std::to_string(k), "s must lie in (0, 1)");
            jumps.push_back(to_json(jump_transfer(cp, mu, s, c.critical().final_eval,
                                                  stream_seed(c.seed, {0x6a756d70ULL, k}))));
        }
        r["jump_transfer"] = jumps;
    }
    c.json("result.json", r);
}

std::vector<Vec> directions(Context& c, int D) {
    std::vector<Vec> dirs;
    if (!c.cfg.contains("directions")) return dirs;
    const Json& d = c.cfg["directions"];
    if (!d.is_array()) bad("/directions", "expected an array of vectors");
    for (std::size_t k = 0; k < d.size(); ++k) {
        Vec y = vec_from_json(d[k], D, "/directions/" + std::to_string(k));
        if (y.norm() == 0.0) bad("/directions/" + std::to_string(k), "direction must be nonzero");
        dirs.push_back(y);
    }
    return dirs;
}

int coupling_samples(Context& c) {
    const int n = c.cfg.contains("coupling_samples") ? get_int(c.cfg["coupling_samples"], "/coupling_samples") : 200;
    if (n < 1) bad("/coupling_samples", "must be >= 1");
    return n;
}

void cmd_rsb_report(Context& c) {
    const SpinMeasure mu = c.mu();
    const XiModel xi = c.xi();
    const CriticalPoint cp = run_critical(c, mu, xi);
    const RsbReport rep = simultaneous_rsb_report(cp, xi, directions(c, mu.dim), coupling_samples(c), c.seed);
    Json r;
    r["simultaneous"] = rep.simultaneous;
    r["report"] = to_json(rep);
    r["critical_point"] = to_json(cp);
    c.json("result.json", r);
    c.csv("pairs.csv", rsb_csv(rep));
}

void cmd_multispecies(Context& c) {
    const MultiSpeciesModel m = multispecies_from_json(need(c.cfg, "model"), "/model");
    const Json& qs = need(c.cfg, "q");
    if (!qs.is_array() || static_cast<int>(qs.size()) != m.species())
        bad("/q", "expected one D=1 path per species");
    std::vector<StepPath> q, p0;
    for (std::size_t s = 0; s < qs.size(); ++s) q.push_back(step_path_from_json(qs[s], "/q/" + std::to_string(s)));
    if (c.cfg.contains("p_init")) {
        const Json& ps = c.cfg["p_init"];
        if (!ps.is_array() || ps.size() != qs.size()) bad("/p_init", "expected one path per species");
        for (std::size_t s = 0; s < ps.size(); ++s)
            p0.push_back(step_path_from_json(ps[s], "/p_init/" + std::to_string(s)));
    } else {
        p0.assign(q.size(), StepPath::zero(1));
    }
    for (std::size_t s = 0; s < q.size(); ++s)
        if (q[s].dim != 1 || p0[s].dim != 1) bad("/q/" + std::to_string(s), "species paths must be one-dimensional");
    const MsCriticalPoint cp = find_ms_critical_point(m, c.t(), q, p0, c.critical(), c.seed);
    const MsReport rep = multispecies_rsb_report(m, cp, coupling_samples(c), c.seed);
    Json r;
    r["jumps_coincide"] = rep.jumps_coincide;
    r["report"] = to_json(rep);
    r["critical_point"] = to_json(cp);
    c.json("result.json", r);
    c.csv("increments.csv", ms_csv(rep));
}

using Handler = void (*)(Context&);

struct Entry {
    const char* name;
    Handler run;
};

const Entry kCommands[] = {
    {"psi", cmd_psi},
    {"decompose", cmd_decompose},
    {"solve-pde", cmd_solve_pde},
    {"characteristics", cmd_characteristics},
    {"grad-psi", cmd_grad_psi},
    {"critical", cmd_critical},
    {"rsb-report", cmd_rsb_report},
    {"multispecies", cmd_multispecies},
};

void check_top_level(const Json& cfg, const std::string& name) {
    if (!cfg.is_object()) bad("/", "config must be a JSON object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        bool ok = false;
        for (const char* k : kTopKeys) ok = ok || it.key() == k;
        if (!ok) bad("/" + it.key(), "unknown field");
    }
    if (cfg.contains("operation")) {
        if (!cfg["operation"].is_string()) bad("/operation", "expected a string");
        if (cfg["operation"].get<std::string>() != name)
            bad("/operation", "config is for '" + cfg["operation"].get<std::string>() + "', not '" + name + "'");
    }
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const Entry& e : kCommands) v.emplace_back(e.name);
        return v;
    }();
    return names;
}

int run_command(const std::string& name, const Json& config, const RunOptions& opt, std::ostream& log) {
    const Entry* entry = nullptr;
    for (const Entry& e : kCommands)
        if (name == e.name) entry = &e;
    if (!entry) {
        log << "unknown command '" << name << "'\n";
        return kConfigError;
    }
    const auto start = std::chrono::steady_clock::now();
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) {
        log << "cannot create output directory " << opt.out_dir << ": " << ec.message() << "\n";
        return kFailed;
    }
    Context c{config, opt};
    try {
        check_top_level(config, name);
        if (opt.budget_scale <= 0.0 || !std::isfinite(opt.budget_scale))
            throw ConfigError("--budget-scale", "must be a positive number");
        if (opt.seed) {
            c.seed = *opt.seed;
        } else {
            const Json& s = need(config, "seed");
            if (!s.is_number_integer() || (!s.is_number_unsigned() && s.get<std::int64_t>() < 0))
                bad("/seed", "expected a nonnegative integer");
            c.seed = s.get<std::uint64_t>();
        }
        set_workers(opt.workers);
        entry->run(c);
    } catch (const ConfigError& e) {
        log << "config error at " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        Json d;
        d["command"] = name;
        d["error"] = e.what();
        d["seed"] = c.seed;
        write_json((fs::path(opt.out_dir) / "diagnostics.json").string(), d);
        log << "numeric failure: " << e.what() << " (see diagnostics.json)\n";
        return kNumericError;
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Json m;
    m["tool"] = "parisi-lab";
    m["version"] = kVersion;
    m["command"] = name;
    m["config_hash"] = content_hash(opt.config_text.empty() ? dump_json(config, -1) : opt.config_text);
    m["seed"] = c.seed;
    m["workers"] = opt.workers;
    m["budget_scale"] = opt.budget_scale;
    m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
    m["nlohmann_json"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                         std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    m["compiler"] = __VERSION__;
    m["wall_time_s"] = wall;
    m["outputs"] = c.written;
    write_json((fs::path(opt.out_dir) / "manifest.json").string(), m);
    log << name << ": wrote " << c.written.size() << " file(s) to " << opt.out_dir << "\n";
    return kOk;
}

std::vector<std::string> result_files(const std::string& out_dir) {
    std::vector<std::string> v;
    for (const auto& e : fs::directory_iterator(out_dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") v.push_back(e.path().filename().string());
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace parisi::cli
