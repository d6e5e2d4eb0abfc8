#include "parisi/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace parisi {

std::string format_double(double x) {
    if (x == 0.0) return std::signbit(x) ? "-0" : "0";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace {

void dump_rec(const Json& j, int indent, int depth, std::string& out) {
    const auto nl = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (j.type()) {
        case Json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                nl(depth + 1);
                out += Json(it.key()).dump();
                out += indent < 0 ? ":" : ": ";
                dump_rec(it.value(), indent, depth + 1, out);
            }
            nl(depth);
            out += '}';
            return;
        }
        case Json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            // arrays of scalars stay on one line
            bool flat = true;
            for (const auto& e : j) flat = flat && !e.is_structured();
            out += '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += flat ? ", " : ",";
                if (!flat) nl(depth + 1);
                dump_rec(j[i], indent, depth + 1, out);
            }
            if (!flat) nl(depth);
            out += ']';
            return;
        }
        case Json::value_t::number_float: {
            const double x = j.get<double>();
            out += std::isfinite(x) ? format_double(x) : "null";
            return;
        }
        default:
            out += j.dump();
    }
}

[[noreturn]] void bad(const std::string& ptr, const std::string& what) { throw ConfigError(ptr.empty() ? "/" : ptr, what); }

const Json& need(const Json& j, const char* key, const std::string& ptr) {
    if (!j.is_object()) bad(ptr, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) bad(ptr + "/" + key, "missing required field");
    return *it;
}

double num(const Json& j, const std::string& ptr) {
    if (!j.is_number()) bad(ptr, "expected a number");
    return j.get<double>();
}

int integer(const Json& j, const std::string& ptr) {
    if (!j.is_number_integer()) bad(ptr, "expected an integer");
    return j.get<int>();
}

bool boolean(const Json& j, const std::string& ptr) {
    if (!j.is_boolean()) bad(ptr, "expected a boolean");
    return j.get<bool>();
}

std::vector<double> numbers(const Json& j, const std::string& ptr) {
    if (!j.is_array()) bad(ptr, "expected an array of numbers");
    std::vector<double> v;
    for (std::size_t i = 0; i < j.size(); ++i) v.push_back(num(j[i], ptr + "/" + std::to_string(i)));
    return v;
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& ptr) {
    if (!j.is_object()) bad(ptr, "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        if (!ok) bad(ptr + "/" + it.key(), "unknown field");
    }
}

template <class F>
auto validated(const std::string& ptr, F f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        bad(ptr, e.what());
    }
}

}  // namespace

std::string dump_json(const Json& j, int indent) {
    std::string out;
    dump_rec(j, indent, 0, out);
    out += '\n';
    return out;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

void write_json(const std::string& path, const Json& j) { write_text(path, dump_json(j)); }

Json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("/", "cannot read " + path);
    try {
        return Json::parse(f);
    } catch (const Json::parse_error& e) {
        throw ConfigError("/", std::string("malformed JSON: ") + e.what());
    }
}

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void write_f64(const std::string& path, const std::vector<double>& values) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    for (double x : values) {
        std::uint64_t u;
        std::memcpy(&u, &x, sizeof u);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        f.write(reinterpret_cast<const char*>(b), 8);
    }
}

std::string CsvTable::str() const {
    std::string out;
    const auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i) out += ',';
            out += r[i];
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

// ---------------------------------------------------------------------------

Json to_json(const Mat& m) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) a.push_back(m(i, j));
    return a;
}

Json to_json(const Vec& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json to_json(const StepPath& q) {
    Json j;
    j["dim"] = q.dim;
    j["breakpoints"] = q.breakpoints;
    Json vals = Json::array();
    for (const Mat& v : q.values) vals.push_back(to_json(v));
    j["values"] = vals;
    return j;
}

Json to_json(const SpinMeasure& mu) {
    Json j;
    j["dim"] = mu.dim;
    Json atoms = Json::array();
    for (const Vec& a : mu.atoms) atoms.push_back(to_json(a));
    j["atoms"] = atoms;
    j["weights"] = mu.weights;
    return j;
}

Json to_json(const XiModel& xi) {
    Json j;
    j["dim"] = xi.dim;
    Json terms = Json::array();
    for (const Monomial& m : xi.terms) {
        Json t;
        t["coef"] = m.coef;
        Json pw = Json::object();
        for (const auto& p : m.powers)
            pw["(" + std::to_string(p.i + 1) + "," + std::to_string(p.j + 1) + ")"] = p.k;
        t["powers"] = pw;
        terms.push_back(t);
    }
    j["terms"] = terms;
    return j;
}

Json to_json(const LipschitzPath& L) {
    Json j;
    j["knots"] = L.knots;
    Json vals = Json::array();
    for (const Mat& v : L.values) vals.push_back(to_json(v));
    j["values"] = vals;
    return j;
}

Json to_json(const Pdf& alpha) {
    Json j;
    j["t"] = alpha.t;
    j["level"] = alpha.level;
    j["T"] = alpha.domain_end;
    return j;
}

Json to_json(const Decomposition& d) {
    Json j;
    j["empty"] = d.empty;
    j["pinned"] = d.pinned;
    j["T"] = d.T();
    j["L"] = to_json(d.L);
    j["alpha"] = to_json(d.alpha);
    j["lipschitz"] = d.L.values.empty() ? 0.0 : d.L.lipschitz();
    return j;
}

Json to_json(const MatEstimate& e) {
    Json j;
    j["mean"] = to_json(e.mean);
    j["se"] = to_json(e.se);
    return j;
}

Json to_json(const ScalarEstimate& e) {
    Json j;
    j["mean"] = e.mean;
    j["se"] = e.se;
    return j;
}

Json to_json(const GibbsEstimate& e) {
    Json j;
    j["mean"] = e.mean;
    j["se"] = e.se;
    j["reps"] = e.reps;
    j["seed"] = e.seed;
    j["leaves"] = e.samples;
    return j;
}

Json to_json(const GradPsiResult& g) {
    Json j;
    j["p"] = to_json(g.p);
    j["p_raw"] = to_json(g.p_raw);
    Json se = Json::array();
    for (const Mat& m : g.se) se.push_back(to_json(m));
    j["se"] = se;
    j["repair"] = g.repair;
    j["max_se"] = g.max_se;
    j["repair_ok"] = g.repair_ok;
    Json fd = Json::array();
    for (const FdCheck& c : g.fd) {
        Json x;
        x["direction"] = to_json(c.direction);
        x["fd"] = c.fd;
        x["predicted"] = c.predicted;
        x["predicted_se"] = c.predicted_se;
        x["central"] = c.central;
        x["tol"] = c.tol;
        x["pass"] = c.pass;
        fd.push_back(x);
    }
    j["fd_checks"] = fd;
    j["fd_ok"] = g.fd_ok;
    j["paths"] = g.ensemble.units * g.ensemble.paths_per_unit;
    return j;
}

Json to_json(const RIdentityReport& r) {
    Json j;
    j["times"] = r.times;
    Json res = Json::array(), comp = Json::array();
    for (const auto& e : r.residual) res.push_back(to_json(e));
    for (const auto& e : r.companion) comp.push_back(to_json(e));
    j["residual"] = res;
    j["companion"] = comp;
    j["max_z"] = r.max_z;
    j["max_abs"] = r.max_abs;
    j["pass"] = r.pass();
    return j;
}

Json to_json(const CriticalPoint& cp) {
    Json j;
    j["t"] = cp.t;
    j["converged"] = cp.converged;
    j["iterations"] = cp.iterations;
    j["trajectory"] = cp.trajectory;
    j["q"] = to_json(cp.q);
    j["qprime"] = to_json(cp.qprime);
    j["p"] = to_json(cp.p);
    j["r1"] = cp.residual.r1;
    j["r2"] = cp.residual.r2;
    j["r2_se"] = cp.residual.r2_se;
    j["final_grad_psi"] = to_json(cp.grad);
    return j;
}

Json to_json(const JumpTransfer& jt) {
    Json j;
    j["jump"] = jt.jump;
    j["s"] = jt.s;
    j["t"] = jt.t;
    j["t_star"] = jt.t_star;
    j["formula"] = to_json(jt.formula);
    j["dq"] = to_json(jt.dq);
    j["dp"] = to_json(jt.dp);
    j["dp_se"] = to_json(jt.dp_se);
    j["max_z"] = jt.max_z;
    j["pass"] = jt.pass();
    return j;
}

Json to_json(const RsbReport& r) {
    Json j;
    Json dirs = Json::array();
    for (const Vec& y : r.directions) dirs.push_back(to_json(y));
    j["directions"] = dirs;
    j["coupled"] = r.coupled;
    j["nonzero"] = r.nonzero;
    j["violations"] = r.violations;
    j["simultaneous"] = r.simultaneous;
    Json pairs = Json::array();
    for (const RsbPair& p : r.pairs) {
        Json x;
        x["k1"] = p.k1;
        x["k2"] = p.k2;
        x["s1"] = p.s1;
        x["s2"] = p.s2;
        x["delta"] = to_json(p.delta);
        x["se"] = to_json(p.se);
        x["min_eig"] = p.min_eig;
        x["max_abs_eig"] = p.max_abs_eig;
        x["threshold"] = p.threshold;
        x["class"] = p.cls;
        x["directional"] = p.directional;
        x["violation"] = p.violation;
        pairs.push_back(x);
    }
    j["pairs"] = pairs;
    return j;
}

Json to_json(const MultiSpeciesModel& m) {
    Json j;
    Json sp = Json::array();
    for (int s = 0; s < m.species(); ++s) {
        const auto su = static_cast<std::size_t>(s);
        Json x;
        x["name"] = su < m.names.size() ? m.names[su] : "s" + std::to_string(s + 1);
        x["lambda"] = m.lambda[su];
        x["mu"] = to_json(m.mu[su]);
        sp.push_back(x);
    }
    j["species"] = sp;
    j["xi"] = to_json(m.xi);
    return j;
}

Json to_json(const MsCriticalPoint& cp) {
    Json j;
    j["t"] = cp.t;
    j["converged"] = cp.converged;
    j["iterations"] = cp.iterations;
    j["trajectory"] = cp.trajectory;
    Json q = Json::array(), qp = Json::array(), p = Json::array(), g = Json::array();
    for (const auto& x : cp.q) q.push_back(to_json(x));
    for (const auto& x : cp.qprime) qp.push_back(to_json(x));
    for (const auto& x : cp.p) p.push_back(to_json(x));
    for (const auto& x : cp.grad.per_species) g.push_back(to_json(x));
    j["q"] = q;
    j["qprime"] = qp;
    j["p"] = p;
    j["r1"] = cp.r1;
    j["r2"] = cp.r2;
    j["r2_se"] = cp.r2_se;
    j["final_grad_psi"] = g;
    return j;
}

Json to_json(const MsReport& r) {
    Json j;
    Json c = Json::array();
    for (const auto& row : r.coupled) {
        Json x = Json::array();
        for (char v : row) x.push_back(v != 0);
        c.push_back(x);
    }
    j["coupled"] = c;
    j["jump_levels"] = r.jump_levels;
    j["increments"] = r.increments;
    j["increment_se"] = r.increment_se;
    j["violations"] = r.violations;
    j["jumps_coincide"] = r.jumps_coincide;
    return j;
}

Json solution_meta(const ParisiSolution& sol) {
    Json j;
    j["dim"] = sol.dim();
    j["T"] = sol.T();
    j["x_max"] = sol.grid.x_max;
    j["h"] = sol.grid.h;
    j["nodes_per_axis"] = sol.grid.n;
    j["cells"] = sol.spec.cells;
    j["gh_nodes"] = sol.spec.gh_nodes;
    j["times"] = sol.times;
    j["alpha_levels"] = sol.s_level;
    j["field_width"] = field_width(sol.dim());
    j["layout"] = "node-major, axis 0 slowest; per node: Phi, grad, Hessian upper triangle row-major";
    return j;
}

CsvTable ensemble_csv(const CharacteristicEnsemble& ens) {
    CsvTable t;
    t.header = {"t", "quantity", "i", "j", "mean", "se"};
    const int D = ens.dim;
    for (std::size_t r = 0; r < ens.record_times.size(); ++r) {
        const MatEstimate R = ens.R_at(static_cast<int>(r)), a = ens.a_at(static_cast<int>(r));
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) {
                t.add({format_double(ens.record_times[r]), "R", std::to_string(i + 1), std::to_string(j + 1),
                       format_double(R.mean(i, j)), format_double(R.se(i, j))});
                t.add({format_double(ens.record_times[r]), "a", std::to_string(i + 1), std::to_string(j + 1),
                       format_double(a.mean(i, j)), format_double(a.se(i, j))});
            }
    }
    return t;
}

CsvTable rsb_csv(const RsbReport& r) {
    CsvTable t;
    t.header = {"k1", "k2", "s1", "s2", "min_eig", "max_abs_eig", "threshold", "class", "violation"};
    for (const RsbPair& p : r.pairs)
        t.add({std::to_string(p.k1), std::to_string(p.k2), format_double(p.s1), format_double(p.s2),
               format_double(p.min_eig), format_double(p.max_abs_eig), format_double(p.threshold), p.cls,
               p.violation ? "1" : "0"});
    return t;
}

CsvTable ms_csv(const MsReport& r) {
    CsvTable t;
    t.header = {"species", "level", "increment", "se", "jump"};
    for (std::size_t s = 0; s < r.increments.size(); ++s)
        for (std::size_t k = 0; k < r.increments[s].size(); ++k) {
            const int level = static_cast<int>(k) + 1;
            bool jump = false;
            for (int l : r.jump_levels[s]) jump = jump || l == level;
            t.add({std::to_string(s + 1), std::to_string(level), format_double(r.increments[s][k]),
                   format_double(r.increment_se[s][k]), jump ? "1" : "0"});
        }
    return t;
}

// ---------------------------------------------------------------------------

Mat mat_from_json(const Json& j, int dim, const std::string& ptr) {
    const auto v = numbers(j, ptr);
    if (static_cast<int>(v.size()) != dim * dim)
        bad(ptr, "expected " + std::to_string(dim * dim) + " row-major entries");
    Mat m(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int k = 0; k < dim; ++k) m(i, k) = v[static_cast<std::size_t>(i * dim + k)];
    return m;
}

Vec vec_from_json(const Json& j, int dim, const std::string& ptr) {
    const auto v = numbers(j, ptr);
    if (static_cast<int>(v.size()) != dim) bad(ptr, "expected " + std::to_string(dim) + " entries");
    Vec x(dim);
    for (int i = 0; i < dim; ++i) x(i) = v[static_cast<std::size_t>(i)];
    return x;
}

StepPath step_path_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"dim", "breakpoints", "values"}, ptr);
    StepPath q;
    q.dim = integer(need(j, "dim", ptr), ptr + "/dim");
    if (q.dim < 1) bad(ptr + "/dim", "must be >= 1");
    q.breakpoints = numbers(need(j, "breakpoints", ptr), ptr + "/breakpoints");
    const Json& vals = need(j, "values", ptr);
    if (!vals.is_array()) bad(ptr + "/values", "expected an array");
    for (std::size_t k = 0; k < vals.size(); ++k)
        q.values.push_back(mat_from_json(vals[k], q.dim, ptr + "/values/" + std::to_string(k)));
    validated(ptr, [&] {
        q.validate();
        return 0;
    });
    return q;
}

SpinMeasure spin_measure_from_json(const Json& j, const std::string& ptr) {
    if (!j.is_object()) bad(ptr, "expected an object");
    SpinMeasure mu;
    if (j.contains("kind")) {
        const Json& k = j["kind"];
        if (!k.is_string()) bad(ptr + "/kind", "expected a string");
        const std::string kind = k.get<std::string>();
        if (kind == "ising") {
            check_keys(j, {"kind", "p_plus", "mass"}, ptr);
            const double pp = j.contains("p_plus") ? num(j["p_plus"], ptr + "/p_plus") : 0.5;
            const double m = j.contains("mass") ? num(j["mass"], ptr + "/mass") : 1.0;
            mu = validated(ptr, [&] { return SpinMeasure::ising(pp, m); });
        } else if (kind == "ising_product") {
            check_keys(j, {"kind", "dim"}, ptr);
            const int d = integer(need(j, "dim", ptr), ptr + "/dim");
            mu = validated(ptr, [&] { return SpinMeasure::ising_product(d); });
        } else if (kind == "dirac") {
            check_keys(j, {"kind", "dim", "at"}, ptr);
            const int d = integer(need(j, "dim", ptr), ptr + "/dim");
            mu = SpinMeasure::dirac(vec_from_json(need(j, "at", ptr), d, ptr + "/at"));
        } else {
            bad(ptr + "/kind", "unknown measure kind '" + kind + "'");
        }
    } else {
        check_keys(j, {"dim", "atoms", "weights"}, ptr);
        mu.dim = integer(need(j, "dim", ptr), ptr + "/dim");
        if (mu.dim < 1) bad(ptr + "/dim", "must be >= 1");
        const Json& atoms = need(j, "atoms", ptr);
        if (!atoms.is_array()) bad(ptr + "/atoms", "expected an array");
        for (std::size_t i = 0; i < atoms.size(); ++i)
            mu.atoms.push_back(vec_from_json(atoms[i], mu.dim, ptr + "/atoms/" + std::to_string(i)));
        mu.weights = numbers(need(j, "weights", ptr), ptr + "/weights");
    }
    validated(ptr, [&] {
        mu.validate();
        return 0;
    });
    return mu;
}

XiModel xi_from_json(const Json& j, const std::string& ptr) {
    if (!j.is_object()) bad(ptr, "expected an object");
    if (j.contains("kind")) {
        check_keys(j, {"kind", "beta"}, ptr);
        if (!j["kind"].is_string() || j["kind"].get<std::string>() != "sk") bad(ptr + "/kind", "unknown xi kind");
        const double beta = j.contains("beta") ? num(j["beta"], ptr + "/beta") : 1.0;
        return XiModel::sk(beta);
    }
    check_keys(j, {"dim", "terms"}, ptr);
    XiModel xi;
    xi.dim = integer(need(j, "dim", ptr), ptr + "/dim");
    if (xi.dim < 1) bad(ptr + "/dim", "must be >= 1");
    const Json& terms = need(j, "terms", ptr);
    if (!terms.is_array()) bad(ptr + "/terms", "expected an array");
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const std::string tp = ptr + "/terms/" + std::to_string(t);
        check_keys(terms[t], {"coef", "powers"}, tp);
        Monomial m;
        m.coef = num(need(terms[t], "coef", tp), tp + "/coef");
        const Json& pw = need(terms[t], "powers", tp);
        if (!pw.is_object()) bad(tp + "/powers", "expected an object keyed by \"(i,j)\"");
        for (auto it = pw.begin(); it != pw.end(); ++it) {
            const std::string pp = tp + "/powers/" + it.key();
            int i = 0, k = 0;
            char tail = 0;
            if (std::sscanf(it.key().c_str(), " ( %d , %d )%c", &i, &k, &tail) != 2)
                bad(pp, "key must have the form (i,j)");
            if (i < 1 || k < 1 || i > xi.dim || k > xi.dim) bad(pp, "entry index out of range (1-based)");
            const int e = integer(it.value(), pp);
            m.powers.push_back({i - 1, k - 1, e});
        }
        xi.terms.push_back(m);
    }
    validated(ptr, [&] {
        xi.validate();
        return 0;
    });
    return xi;
}

MultiSpeciesModel multispecies_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"species", "xi"}, ptr);
    MultiSpeciesModel m;
    const Json& sp = need(j, "species", ptr);
    if (!sp.is_array() || sp.empty()) bad(ptr + "/species", "expected a nonempty array");
    for (std::size_t s = 0; s < sp.size(); ++s) {
        const std::string p = ptr + "/species/" + std::to_string(s);
        check_keys(sp[s], {"name", "lambda", "mu"}, p);
        if (sp[s].contains("name")) {
            if (!sp[s]["name"].is_string()) bad(p + "/name", "expected a string");
            m.names.push_back(sp[s]["name"].get<std::string>());
        } else {
            m.names.push_back("s" + std::to_string(s + 1));
        }
        m.lambda.push_back(num(need(sp[s], "lambda", p), p + "/lambda"));
        m.mu.push_back(spin_measure_from_json(need(sp[s], "mu", p), p + "/mu"));
    }
    m.xi = xi_from_json(need(j, "xi", ptr), ptr + "/xi");
    validated(ptr, [&] {
        m.validate();
        return 0;
    });
    return m;
}

LipschitzPath lipschitz_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"dim", "knots", "values"}, ptr);
    const int dim = integer(need(j, "dim", ptr), ptr + "/dim");
    LipschitzPath L;
    L.knots = numbers(need(j, "knots", ptr), ptr + "/knots");
    const Json& vals = need(j, "values", ptr);
    if (!vals.is_array() || vals.size() != L.knots.size()) bad(ptr + "/values", "expected one matrix per knot");
    for (std::size_t k = 0; k < vals.size(); ++k)
        L.values.push_back(mat_from_json(vals[k], dim, ptr + "/values/" + std::to_string(k)));
    if (L.knots.empty() || L.knots.front() != 0.0) bad(ptr + "/knots", "must start at 0");
    for (std::size_t k = 1; k < L.knots.size(); ++k)
        if (!(L.knots[k] > L.knots[k - 1])) bad(ptr + "/knots/" + std::to_string(k), "knots must increase");
    return L;
}

GridSpec grid_spec_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"cells", "x_max", "gh_nodes"}, ptr);
    GridSpec g;
    if (j.contains("cells")) g.cells = integer(j["cells"], ptr + "/cells");
    if (j.contains("x_max")) g.x_max = num(j["x_max"], ptr + "/x_max");
    if (j.contains("gh_nodes")) g.gh_nodes = integer(j["gh_nodes"], ptr + "/gh_nodes");
    if (g.cells < 2) bad(ptr + "/cells", "must be >= 2");
    if (g.x_max < 0.0) bad(ptr + "/x_max", "must be >= 0");
    if (g.gh_nodes < 0) bad(ptr + "/gh_nodes", "must be >= 0");
    return g;
}

CharOptions char_options_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"n_paths", "dt_rel", "antithetic", "slice_stride", "block", "gap_steps", "record_times"}, ptr);
    CharOptions o;
    if (j.contains("n_paths")) o.n_paths = integer(j["n_paths"], ptr + "/n_paths");
    if (j.contains("dt_rel")) o.dt_rel = num(j["dt_rel"], ptr + "/dt_rel");
    if (j.contains("antithetic")) o.antithetic = boolean(j["antithetic"], ptr + "/antithetic");
    if (j.contains("slice_stride")) o.slice_stride = integer(j["slice_stride"], ptr + "/slice_stride");
    if (j.contains("block")) o.block = integer(j["block"], ptr + "/block");
    if (j.contains("gap_steps")) o.gap_steps = integer(j["gap_steps"], ptr + "/gap_steps");
    if (j.contains("record_times")) o.record_times = numbers(j["record_times"], ptr + "/record_times");
    if (o.n_paths < 2) bad(ptr + "/n_paths", "must be >= 2");
    if (!(o.dt_rel > 0.0 && o.dt_rel <= 1.0)) bad(ptr + "/dt_rel", "must lie in (0, 1]");
    if (o.block < 1) bad(ptr + "/block", "must be >= 1");
    if (o.gap_steps < 0) bad(ptr + "/gap_steps", "must be >= 0");
    if (o.slice_stride < 0) bad(ptr + "/slice_stride", "must be >= 0");
    return o;
}

GradPsiOptions grad_psi_options_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"characteristics", "grid", "fd_check", "fd_directions", "fd_eps", "fd_abs_tol"}, ptr);
    GradPsiOptions o;
    if (j.contains("characteristics")) o.ch = char_options_from_json(j["characteristics"], ptr + "/characteristics");
    if (j.contains("grid")) o.grid = grid_spec_from_json(j["grid"], ptr + "/grid");
    if (j.contains("fd_check")) o.fd_check = boolean(j["fd_check"], ptr + "/fd_check");
    if (j.contains("fd_directions")) o.fd_directions = integer(j["fd_directions"], ptr + "/fd_directions");
    if (j.contains("fd_eps")) o.fd_eps = num(j["fd_eps"], ptr + "/fd_eps");
    if (j.contains("fd_abs_tol")) o.fd_abs_tol = num(j["fd_abs_tol"], ptr + "/fd_abs_tol");
    if (!(o.fd_eps > 0.0)) bad(ptr + "/fd_eps", "must be positive");
    return o;
}

CascadeOptions cascade_options_from_json(const Json& j, const std::string& ptr) {
    check_keys(j, {"truncation", "tail_tol", "leaf_tail_tol", "tail_correction", "antithetic", "max_leaves"}, ptr);
    CascadeOptions o;
    if (j.contains("truncation")) o.truncation = integer(j["truncation"], ptr + "/truncation");
    if (j.contains("tail_tol")) o.tail_tol = num(j["tail_tol"], ptr + "/tail_tol");
    if (j.contains("leaf_tail_tol")) o.leaf_tail_tol = num(j["leaf_tail_tol"], ptr + "/leaf_tail_tol");
    if (j.contains("tail_correction")) o.tail_correction = boolean(j["tail_correction"], ptr + "/tail_correction");
    if (j.contains("antithetic")) o.antithetic = boolean(j["antithetic"], ptr + "/antithetic");
    if (j.contains("max_leaves")) o.max_leaves = j["max_leaves"].is_number_integer() ? j["max_leaves"].get<long>() : -1;
    if (o.truncation < 1) bad(ptr + "/truncation", "must be >= 1");
    if (o.max_leaves < 1) bad(ptr + "/max_leaves", "must be a positive integer");
    return o;
}

}  // namespace parisi
