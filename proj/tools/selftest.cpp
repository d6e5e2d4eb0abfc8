#include "selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "commands.hpp"
#include "parisi/cascade.hpp"
#include "parisi/characteristics.hpp"
#include "parisi/parallel.hpp"
#include "parisi/parisi_pde.hpp"
#include "parisi/paths.hpp"
#include "parisi/rsb.hpp"

namespace fs = std::filesystem;

namespace parisi::selftest {

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

Mat m1(double v) { return Mat::Constant(1, 1, v); }

StepPath scalar_path(const std::vector<double>& bp, const std::vector<double>& v) {
    StepPath q;
    q.dim = 1;
    q.breakpoints = bp;
    for (double x : v) q.values.push_back(m1(x));
    return q;
}

/// E f(g) for standard Gaussian g by the trapezoid rule on [-12, 12].
double gauss_expect(const std::function<double(double)>& f) {
    const int n = 24000;
    const double a = -12.0, h = 24.0 / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double g = a + i * h;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * f(g) * std::exp(-0.5 * g * g);
    }
    return acc * h / std::sqrt(2.0 * M_PI);
}

// ---- 1 ---------------------------------------------------------------------

Pdf random_pdf(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const int n = 1 + static_cast<int>(gen() % 5);
    Pdf a;
    a.t.push_back(0.0);
    for (int l = 1; l < n; ++l) a.t.push_back(a.t.back() + 0.05 + ud(gen));
    std::vector<double> lev;
    for (int l = 0; l < n - 1; ++l) lev.push_back(ud(gen));
    std::sort(lev.begin(), lev.end());
    if (gen() % 2 == 0 && !lev.empty()) lev.front() = 0.0;
    for (double v : lev)
        if (a.level.empty() || v > a.level.back() + 1e-6) a.level.push_back(v);
    a.t.resize(a.level.size() + 1);
    a.level.push_back(1.0);
    a.domain_end = a.t.back() + (gen() % 2 ? 0.0 : ud(gen));
    a.validate();
    return a;
}

StepPath random_path(std::mt19937_64& gen, int D) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::normal_distribution<double> nd;
    const int K = 1 + static_cast<int>(gen() % 4);
    StepPath q;
    q.dim = D;
    q.breakpoints.push_back(0.0);
    std::vector<double> bp;
    for (int k = 1; k < K; ++k) bp.push_back(0.02 + 0.96 * ud(gen));
    std::sort(bp.begin(), bp.end());
    for (double b : bp)
        if (b > q.breakpoints.back() + 1e-3) q.breakpoints.push_back(b);
    Mat run = Mat::Zero(D, D);
    for (std::size_t k = 0; k < q.breakpoints.size(); ++k) {
        const double r = ud(gen);
        if (!(k == 0 && r < 0.3) && !(k > 0 && r < 0.15)) {
            Mat g(D, D);
            for (int i = 0; i < D; ++i)
                for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
            run += 0.5 * g * g.transpose() / D;
        }
        q.values.push_back(run);
    }
    if (q.values.back().trace() <= 0.0) q.values.back() += 0.1 * Mat::Identity(D, D);
    return q;
}

/// Worst violation of the quantile lemmas for one p.d.f.
double quantile_lemmas(const Pdf& a, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    double worst = 0.0;
    const auto bad = [&](double v) { worst = std::max(worst, v); };
    const auto supp = support_of_dalpha(a);
    std::vector<double> s_cand{0.0};
    for (double l : a.level) s_cand.push_back(l);
    std::vector<double> times = a.t;
    for (std::size_t l = 0; l + 1 < a.t.size(); ++l) times.push_back(0.5 * (a.t[l] + a.t[l + 1]));
    times.push_back(a.T());
    for (int i = 0; i < 5; ++i) times.push_back(ud(gen) * a.T());

    for (double t : times) {
        // alpha(t) = sup {s : t >= alpha^{-1}(s)}; alpha^{-1} is constant on (level_{l-1}, level_l]
        double sup = 0.0;
        for (double s : s_cand)
            if (quantile_inverse(a, s) <= t) sup = std::max(sup, s);
        bad(std::abs(sup - a(t)));
        // law of alpha^{-1}(U): Lebesgue measure of {s : alpha^{-1}(s) <= t}
        const QuantileStep qs = quantile_of(a);
        double mass = 0.0;
        for (std::size_t i = 0; i < qs.c.size(); ++i)
            if (qs.c[i] <= t) mass += qs.u[i + 1] - qs.u[i];
        bad(std::abs(mass - a(t)));
    }
    // alpha^{-1} o alpha (t) = t on the range of alpha^{-1}; right limit on its closure
    std::vector<double> range{0.0};
    for (double s : s_cand) range.push_back(quantile_inverse(a, s));
    for (double t : range) {
        bad(std::abs(quantile_inverse(a, a(t)) - t));
        const int l = a.piece(t);
        const double next = static_cast<std::size_t>(l) + 1 < a.t.size() ? a.t[static_cast<std::size_t>(l) + 1] : a.T();
        const double tp = t < a.T() ? t + 0.5 * (std::min(next, a.T()) - t) : t;
        bad(std::abs(quantile_inverse(a, a(tp)) - t));
    }
    // support = closure of alpha^{-1}((0,1]) and alpha^{-1} o alpha(t+) = t on {0} U supp
    std::vector<double> img;
    for (double s : s_cand)
        if (s > 0.0) img.push_back(quantile_inverse(a, s));
    for (double x : supp) {
        double d = 1e300;
        for (double y : img) d = std::min(d, std::abs(x - y));
        bad(d);
        bad(std::abs(quantile_inverse(a, a(x)) - x));
    }
    for (double y : img) {
        double d = 1e300;
        for (double x : supp) d = std::min(d, std::abs(x - y));
        bad(d);
    }
    // int h(alpha^{-1}(s)) ds = int h d alpha
    const auto h = [](double t) { return std::sin(3.0 * t) + t * t; };
    {
        const QuantileStep qs = quantile_of(a);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < qs.c.size(); ++i) lhs += (qs.u[i + 1] - qs.u[i]) * h(qs.c[i]);
        const auto mass = dalpha_masses(a);
        for (std::size_t i = 0; i < supp.size(); ++i) rhs += mass[i] * h(supp[i]);
        bad(std::abs(lhs - rhs));
    }
    const auto in_supp0 = [&](double t) {
        if (t == 0.0) return true;
        for (double x : supp)
            if (x == t) return true;
        return false;
    };
    // strict increase at s gives t in {0} U supp with alpha(t) = s = alpha(alpha^{-1}(s))
    for (double s : s_cand) {
        if (s >= 1.0) continue;
        if (!(quantile_inverse_right(a, s) > quantile_inverse(a, s))) continue;
        const double t = quantile_inverse(a, s);
        if (!in_supp0(t)) bad(1.0);
        bad(std::abs(a(t) - s));
    }
    // alpha^{-1}(u) < alpha^{-1}(v) gives a point of strict increase in [u, v)
    for (int i = 0; i < 10; ++i) {
        double u = ud(gen), v = ud(gen);
        if (u > v) std::swap(u, v);
        if (!(quantile_inverse(a, u) < quantile_inverse(a, v))) continue;
        bool found = false;
        std::vector<double> cand{u};
        for (double l : a.level)
            if (l >= u && l < v) cand.push_back(l);
        for (double s : cand) found = found || quantile_inverse_right(a, s) > quantile_inverse(a, s);
        if (!found) bad(1.0);
    }
    // jump at s iff (t, t*) as described exists
    std::vector<double> s_test = s_cand;
    for (int i = 0; i < 5; ++i) s_test.push_back(ud(gen));
    for (double s : s_test) {
        if (s >= 1.0) continue;
        const double t = quantile_inverse(a, s), ts = quantile_inverse_right(a, s);
        const bool jump = ts > t;
        bool witness = jump && in_supp0(t) && in_supp0(ts) && a(t) == s;
        if (witness)
            for (double x : supp) witness = witness && !(x > t && x < ts);
        if (jump != witness) bad(1.0);
    }
    return worst;
}

Outcome c1() {
    std::mt19937_64 gen(20240101);
    double worst = 0.0, worst_decomp = 0.0, worst_lip = 0.0;
    for (int n = 0; n < 500; ++n) {
        const int D = 1 + n % 2;
        const StepPath q = random_path(gen, D);
        const Decomposition d = canonical_decomposition(q);
        if (!d.empty) {
            worst = std::max(worst, quantile_lemmas(d.alpha, gen));
            std::vector<double> s;
            for (std::size_t k = 1; k < q.breakpoints.size(); ++k) {
                s.push_back(q.breakpoints[k]);
                s.push_back(0.5 * (q.breakpoints[k - 1] + q.breakpoints[k]));
            }
            s.push_back(1.0);
            s.push_back(0.999);
            worst_decomp = std::max(worst_decomp, decomposition_residual(q, d, s));
            for (int i = 0; i <= 20; ++i) {
                const double t = d.T() * i / 20.0;
                worst_decomp = std::max(worst_decomp, std::abs(d.L(t).trace() - t));
            }
            worst_decomp = std::max(worst_decomp, d.L(0.0).cwiseAbs().maxCoeff());
            if (!d.L.increasing()) worst_decomp = std::max(worst_decomp, 1.0);
            worst_lip = std::max(worst_lip, d.L.lipschitz() - std::sqrt(static_cast<double>(D)));
        }
        worst = std::max(worst, quantile_lemmas(random_pdf(gen), gen));
    }
    Outcome o;
    o.pass = worst <= 1e-12 && worst_decomp <= 1e-12 && worst_lip <= 1e-12;
    o.detail = "500 instances; lemma err " + fmt("%.1e", worst) + ", decomposition err " + fmt("%.1e", worst_decomp) +
               ", Lip - sqrt(D) " + fmt("%.2e", worst_lip) + " (tol 1e-12)";
    return o;
}

// ---- 2 ---------------------------------------------------------------------

Decomposition alpha_one(double T) {
    Decomposition d;
    d.L.knots = {0.0, T};
    d.L.values = {m1(0.0), m1(T)};
    d.alpha.t = {0.0};
    d.alpha.level = {1.0};
    d.alpha.domain_end = T;
    d.pinned = true;
    return d;
}

Outcome c2() {
    const SpinMeasure mu = SpinMeasure::ising(0.5, 2.0);
    const Decomposition d = alpha_one(1.0);
    const ParisiSolution sol = solve_parisi(mu, d);
    double sup = 0.0;
    for (int i = -300; i <= 300; ++i) {
        const double x = i / 100.0;
        sup = std::max(sup, std::abs(sol.eval(0.0, Vec::Constant(1, x)).value - std::log(2.0 * std::cosh(x))));
    }
    const std::vector<double> ts{0.25, 0.5, 0.75};
    const std::vector<double> xs{-1.0, 0.0, 0.5, 1.5};
    // residual under refinement on a two-level instance where the fields are not closed form
    const StepPath q = scalar_path({0.0, 0.4}, {0.2, 0.6});
    const Decomposition dq = canonical_decomposition(q);
    std::vector<double> res;
    double interior = 0.0;
    for (int cells : {64, 128, 256}) {
        GridSpec g;
        g.cells = cells;
        const ParisiSolution s = solve_parisi(SpinMeasure::ising(), dq, g);
        double r = 0.0;
        for (double t : ts)
            for (double x : xs) r = std::max(r, pde_residual(s, t * s.T(), Vec::Constant(1, x)));
        res.push_back(r);
    }
    for (double t : ts)
        for (double x : xs) interior = std::max(interior, pde_residual(sol, t, Vec::Constant(1, x)));
    interior = std::max(interior, res.back());
    const bool mono = res[1] < res[0] && res[2] < res[1];
    Outcome o;
    o.pass = sup <= 1e-6 && interior <= 1e-4 && mono;
    o.detail = "sup|Phi - log 2cosh| " + fmt("%.2e", sup) + " (tol 1e-6); residual " + fmt("%.2e", interior) +
               " (tol 1e-4); refinement " + fmt("%.2e", res[0]) + " > " + fmt("%.2e", res[1]) + " > " +
               fmt("%.2e", res[2]);
    return o;
}

// ---- 3 ---------------------------------------------------------------------

Outcome c3() {
    Outcome o;
    const std::vector<std::vector<double>> bps{{0.0}, {0.0, 0.4}, {0.0, 0.3, 0.6}};
    const std::vector<std::vector<double>> vals{{0.08}, {0.04, 0.08}, {0.02, 0.05, 0.08}};
    SpinMeasure m2;
    m2.dim = 2;
    Vec a(2), b(2);
    a << 1.0, 0.5;
    b << -0.5, 1.0;
    m2.atoms = {a, b};
    m2.weights = {0.5, 0.5};
    double worst_z = 0.0, worst_se = 0.0;
    for (int D : {1, 2})
        for (int K = 1; K <= 3; ++K) {
            StepPath q;
            q.dim = D;
            q.breakpoints = bps[static_cast<std::size_t>(K - 1)];
            for (double v : vals[static_cast<std::size_t>(K - 1)]) {
                Mat m = Mat::Identity(D, D) * v;
                if (D == 2) m(0, 1) = m(1, 0) = 0.3 * v;
                q.values.push_back(m);
            }
            const SpinMeasure& mu = D == 1 ? SpinMeasure::ising() : m2;
            Vec x(D);
            if (D == 1) x << 0.3;
            else x << 0.3, -0.2;
            GridSpec gs;
            gs.cells = D == 1 ? 256 : 128;
            const ParisiSolution sol = solve_parisi(mu, canonical_decomposition(q), gs);
            const double pde = sol.eval(0.0, x).value;
            const GibbsEstimate e = mc_f_mu(mu, q, x, Mat::Zero(D, D), 400, CascadeOptions{},
                                            1000u + static_cast<unsigned>(10 * D + K));
            const double z = std::abs(pde - e.value()) / e.error();
            worst_z = std::max(worst_z, z);
            worst_se = std::max(worst_se, e.error());
            o.pass = o.pass && z <= 3.0 && e.error() <= 5e-3;
        }
    o.detail = "D in {1,2}, K in {1,2,3}; worst |diff|/SE " + fmt("%.2f", worst_z) + " (tol 3), worst SE " +
               fmt("%.2e", worst_se) + " (tol 5e-3)";
    return o;
}

// ---- 4 ---------------------------------------------------------------------

Outcome c4() {
    Outcome o;
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath q = scalar_path({0.0, 0.4}, {0.03, 0.08});
    const double pde = psi_value(mu, q);
    const GibbsEstimate e = mc_psi(mu, q, 400, CascadeOptions{}, 4242);
    const double z = std::abs(pde - e.value()) / e.error();
    double worst = 0.0;
    for (double h : {0.1, 0.5, 1.0}) {
        const double oracle = h - gauss_expect([h](double g) {
            const double y = std::sqrt(2.0 * h) * g;
            return std::abs(y) + std::log1p(std::exp(-2.0 * std::abs(y))) - std::log(2.0);
        });
        worst = std::max(worst, std::abs(psi_value(mu, StepPath::constant(m1(h))) - oracle));
    }
    o.pass = z <= 3.0 && worst <= 1e-6;
    o.detail = "psi vs mc_psi |diff|/SE " + fmt("%.2f", z) + " (tol 3); constant paths vs quadrature " +
               fmt("%.2e", worst) + " (tol 1e-6)";
    return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome c5() {
    std::mt19937_64 gen(5150);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const SpinMeasure mu = SpinMeasure::ising();
    double worst_ratio = 0.0;
    int done = 0;
    while (done < 50) {
        const StepPath q = random_path(gen, 1);
        const Decomposition d = canonical_decomposition(q);
        if (d.empty) continue;
        const double T = d.T();
        Decomposition d2 = d;
        const double b = 0.05 * ud(gen);
        for (std::size_t i = 0; i < d2.L.knots.size(); ++i) d2.L.values[i] += m1(b * d2.L.knots[i]);
        // perturb interior levels, keeping them strictly increasing in [0, 1)
        for (std::size_t l = 0; l + 1 < d2.alpha.level.size(); ++l) {
            const double lo = l == 0 ? 0.0 : d2.alpha.level[l - 1];
            const double hi = d.alpha.level[l + 1];
            const double v = d.alpha.level[l] + 0.1 * (ud(gen) - 0.5) * (hi - lo);
            d2.alpha.level[l] = std::clamp(v, lo + 1e-6 * (l > 0), hi - 1e-6);
            if (l == 0 && d.alpha.level[0] == 0.0) d2.alpha.level[0] = 0.0;
        }
        d2.alpha.validate();
        double l1 = 0.0;
        for (std::size_t l = 0; l < d.alpha.t.size(); ++l) {
            const double hi = l + 1 < d.alpha.t.size() ? d.alpha.t[l + 1] : T;
            l1 += std::abs(d.alpha.level[l] - d2.alpha.level[l]) * (hi - d.alpha.t[l]);
        }
        const double bound = 3.0 * b * T + d.L.lipschitz() * l1;
        GridSpec g;
        g.x_max = default_extent(mu, d2.L(T));
        const ParisiSolution s1 = solve_parisi(mu, d, g), s2 = solve_parisi(mu, d2, g);
        double diff = 0.0;
        for (double t : {0.0, 0.5 * T})
            for (int i = -20; i <= 20; ++i) {
                const Vec x = Vec::Constant(1, i / 10.0);
                diff = std::max(diff, std::abs(s1.eval(t, x).value - s2.eval(t, x).value));
            }
        if (bound > 0.0) worst_ratio = std::max(worst_ratio, 1.1 * diff / bound);
        else if (diff > 1e-12) worst_ratio = std::max(worst_ratio, 1e9);
        ++done;
    }
    Outcome o;
    o.pass = worst_ratio <= 1.0;
    o.detail = "50 perturbations; worst 1.1 |Phi - Phi'| / bound " + fmt("%.3f", worst_ratio) + " (tol 1)";
    return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome c6() {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath q = scalar_path({0.0, 0.4}, {0.2, 0.6});
    const ParisiSolution sol = solve_parisi(mu, canonical_decomposition(q));
    CharOptions co;
    co.n_paths = 100000;
    co.dt_rel = 1e-3;
    const CharacteristicEnsemble ens = simulate(sol, X0Spec::fixed(Vec::Zero(1)), co, 606);
    const RIdentityReport r = check_R_identity(ens);
    Outcome o;
    o.pass = r.pass(3.0) && ens.max_grad_norm <= mu.max_norm();
    o.detail = "R identity max |res|/SE " + fmt("%.2f", r.max_z) + " (tol 3); max |grad Phi| " +
               fmt("%.6f", ens.max_grad_norm) + " <= " + fmt("%.1f", mu.max_norm());
    return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome c7() {
    const SpinMeasure mu = SpinMeasure::ising();
    GradPsiOptions go;
    go.ch.n_paths = 100000;
    go.fd_eps = 1e-3;
    go.fd_directions = 2;
    go.fd_abs_tol = 2e-3;
    Outcome o;
    double worst = 0.0;
    for (const StepPath& q : {StepPath::constant(m1(0.3)), scalar_path({0.0, 0.4}, {0.2, 0.6})}) {
        const GradPsiResult g = grad_psi(mu, q, go, 707);
        o.pass = o.pass && g.fd_ok && g.fd.size() == 2;
        for (const FdCheck& c : g.fd) worst = std::max(worst, std::abs(c.fd - c.predicted) / c.tol);
    }
    o.detail = "constant and 2-level paths, 2 directions each; worst |fd - int p.d| / (2e-3 + 3 SE) " +
               fmt("%.3f", worst) + " (tol 1)";
    return o;
}

// ---- 8 ---------------------------------------------------------------------

Outcome c8() {
    GradPsiOptions go;
    go.ch.n_paths = 100000;
    go.fd_check = false;
    Outcome o;
    std::string d;
    const auto one = [&](const char* name, const SpinMeasure& mu, const StepPath& q, double expect) {
        const LeftEndpointReport r = left_endpoint_check(mu, q, go, 800, 808);
        bool ok = r.pass;
        if (expect >= 0.0) ok = ok && std::abs(r.p0(0, 0) - expect) <= 1e-12;
        o.pass = o.pass && ok;
        d += std::string(d.empty() ? "" : "; ") + name + " p(0) " + fmt("%.5f", r.p0(0, 0)) + " rhs " +
             fmt("%.5f", r.rhs(0, 0)) + " z " + fmt("%.2f", r.max_z);
    };
    one("symmetric", SpinMeasure::ising(), scalar_path({0.0, 0.4}, {0.0, 0.5}), 0.0);
    one("0.7/0.3 q=0", SpinMeasure::ising(0.7), StepPath::zero(1), 0.16);
    one("0.7/0.3 2-level", SpinMeasure::ising(0.7), scalar_path({0.0, 0.5}, {0.0, 0.4}), -1.0);
    o.detail = d + " (tol 3 SE)";
    return o;
}

// ---- 9 ---------------------------------------------------------------------

CriticalOptions d1_critical() {
    CriticalOptions o;
    o.inner.ch.n_paths = 20000;
    o.inner.ch.gap_steps = 300;
    o.inner.fd_check = false;
    o.final_eval.ch.n_paths = 100000;
    o.final_eval.fd_check = false;
    return o;
}

Outcome c9() {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath q = scalar_path({0.0, 0.4}, {0.2, 0.6});
    const CriticalPoint cp = find_critical_point(0.25, q, mu, XiModel::sk(1.0), StepPath::zero(1), d1_critical(), 909);
    GradPsiOptions jo;
    jo.ch.n_paths = 100000;
    jo.fd_check = false;
    const JumpTransfer jt = jump_transfer(cp, mu, 0.4, jo, 919);
    Outcome o;
    o.pass = cp.converged && jt.jump && jt.pass(3.0);
    o.detail = std::string(cp.converged ? "converged" : "NOT converged") + " in " + std::to_string(cp.iterations) +
               " iterations; formula " + fmt("%.5f", jt.formula.mean(0, 0)) + " +- " + fmt("%.1e", jt.formula.se(0, 0)) +
               " vs direct " + fmt("%.5f", jt.dp(0, 0)) + " +- " + fmt("%.1e", jt.dp_se(0, 0)) + ", z " +
               fmt("%.2f", jt.max_z) + " (tol 3)";
    return o;
}

// ---- 10 --------------------------------------------------------------------

XiModel coupled_xi() {
    XiModel xi;
    xi.dim = 2;
    xi.terms = {Monomial{1.0, {{0, 0, 2}}}, Monomial{1.0, {{1, 1, 2}}}, Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    return xi;
}

CriticalOptions d2_critical() {
    CriticalOptions o;
    o.inner.ch.n_paths = 10000;
    o.inner.ch.gap_steps = 200;
    o.inner.grid.cells = 64;
    o.inner.fd_check = false;
    o.final_eval.ch.n_paths = 20000;
    o.final_eval.ch.dt_rel = 2e-3;
    o.final_eval.grid.cells = 64;
    o.final_eval.fd_check = false;
    return o;
}

Outcome c10() {
    const SpinMeasure mu = SpinMeasure::ising_product(2);
    StepPath q;
    q.dim = 2;
    q.breakpoints = {0.0, 0.5};
    Mat a = Mat::Zero(2, 2);
    a(0, 0) = 0.3;
    q.values = {Mat::Zero(2, 2), a};
    const XiModel xi = coupled_xi();
    const CriticalPoint cp = find_critical_point(1.0, q, mu, xi, StepPath::zero(2), d2_critical(), 1010);
    const RsbReport r = simultaneous_rsb_report(cp, xi, {}, 200, 1);
    bool pd = r.nonzero > 0;
    double min_ratio = 1e300;
    for (const RsbPair& p : r.pairs)
        if (p.cls != "zero") {
            pd = pd && p.min_eig > p.threshold;
            min_ratio = std::min(min_ratio, p.min_eig / p.threshold);
        }

    XiModel control;
    control.dim = 2;
    control.terms = {Monomial{1.0, {{0, 0, 2}}}};
    const CriticalPoint cc = find_critical_point(1.0, q, mu, control, StepPath::zero(2), d2_critical(), 1011);
    const RsbReport rc = simultaneous_rsb_report(cc, control, {}, 200, 1);
    std::string control_cls;
    for (const RsbPair& p : rc.pairs) control_cls += (control_cls.empty() ? "" : ",") + p.cls;

    MultiSpeciesModel m;
    m.names = {"a", "b"};
    m.lambda = {0.5, 0.5};
    m.mu = {SpinMeasure::ising(), SpinMeasure::ising()};
    m.xi.dim = 2;
    m.xi.terms = {Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    const MsCriticalPoint mc = find_ms_critical_point(m, 1.0, {scalar_path({0.0, 0.5}, {0.0, 0.3}), StepPath::zero(1)},
                                                      {StepPath::zero(1), StepPath::zero(1)}, d1_critical(), 1012);
    const MsReport mr = multispecies_rsb_report(m, mc, 200, 1);
    const bool ms_ok = mc.converged && mr.jumps_coincide && !mr.jump_levels.front().empty() && mr.violations == 0;

    Outcome o;
    o.pass = cp.converged && r.coupled && pd && r.violations == 0 && ms_ok;
    o.detail = std::string("D=2 coupled ") + (cp.converged ? "converged" : "NOT converged") +
               ", smallest eig / (3 SE) " + fmt("%.1f", min_ratio) + " (tol > 1); control classes [" + control_cls +
               "] (not asserted); multi-species " + (mc.converged ? "converged" : "NOT converged") + ", jumps " +
               (mr.jumps_coincide ? "coincide" : "differ");
    return o;
}

// ---- 11 --------------------------------------------------------------------

Json det_config(const std::string& cmd) {
    const Json q2 = to_json(scalar_path({0.0, 0.4}, {0.2, 0.6}));
    const Json mu = Json{{"kind", "ising"}, {"p_plus", 0.6}};
    Json c;
    c["seed"] = 1111;
    if (cmd == "psi") {
        c["mu"] = mu;
        c["q"] = q2;
        c["reps"] = 40;
    } else if (cmd == "solve-pde") {
        c["mu"] = mu;
        c["q"] = q2;
        c["grid"] = Json{{"cells", 64}};
    } else if (cmd == "characteristics" || cmd == "grad-psi") {
        c["mu"] = mu;
        c["q"] = q2;
        c["characteristics"] = Json{{"n_paths", 4000}, {"dt_rel", 0.004}};
        if (cmd == "grad-psi") c["grad_psi"] = Json{{"fd_directions", 1}};
    } else if (cmd == "critical") {
        c["mu"] = mu;
        c["xi"] = Json{{"kind", "sk"}, {"beta", 1.0}};
        c["q"] = q2;
        c["t"] = 0.25;
        c["characteristics"] = Json{{"n_paths", 2000}, {"gap_steps", 100}};
        c["critical"] = Json{{"max_iter", 4}};
        c["jump_at"] = Json::array({0.4});
    } else if (cmd == "multispecies") {
        Json sp = Json::array();
        sp.push_back(Json{{"name", "a"}, {"lambda", 0.5}, {"mu", Json{{"kind", "ising"}}}});
        sp.push_back(Json{{"name", "b"}, {"lambda", 0.5}, {"mu", Json{{"kind", "ising"}, {"p_plus", 0.6}}}});
        c["model"] = Json{{"species", sp},
                          {"xi", Json{{"dim", 2}, {"terms", Json::array({Json{{"coef", 1.0}, {"powers", Json{{"(1,1)", 1}, {"(2,2)", 1}}}}})}}}};
        c["q"] = Json::array({to_json(scalar_path({0.0, 0.5}, {0.0, 0.3})), to_json(StepPath::zero(1))});
        c["t"] = 1.0;
        c["characteristics"] = Json{{"n_paths", 2000}, {"gap_steps", 100}};
        c["critical"] = Json{{"max_iter", 3}};
    }
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome c11(const std::string& scratch) {
    Outcome o;
    const std::vector<std::string> cmds{"psi", "solve-pde", "characteristics", "grad-psi", "critical", "multispecies"};
    int files = 0;
    std::string bad;
    for (const std::string& cmd : cmds) {
        const Json cfg = det_config(cmd);
        std::vector<std::string> dirs;
        for (int w : {1, 4}) {
            cli::RunOptions ro;
            ro.workers = w;
            ro.out_dir = (fs::path(scratch) / ("w" + std::to_string(w)) / cmd).string();
            fs::remove_all(ro.out_dir);
            std::ostringstream log;
            const int rc = cli::run_command(cmd, cfg, ro, log);
            if (rc != cli::kOk) {
                o.pass = false;
                std::string msg = log.str();
                while (!msg.empty() && msg.back() == '\n') msg.pop_back();
                bad += " " + cmd + "(exit " + std::to_string(rc) + ": " + msg + ")";
                break;
            }
            dirs.push_back(ro.out_dir);
        }
        if (!o.pass) continue;
        const auto f1 = cli::result_files(dirs[0]), f4 = cli::result_files(dirs[1]);
        if (f1 != f4 || f1.empty()) {
            o.pass = false;
            bad += " " + cmd + "(file sets differ)";
            continue;
        }
        for (const std::string& f : f1) {
            ++files;
            if (slurp(fs::path(dirs[0]) / f) != slurp(fs::path(dirs[1]) / f)) {
                o.pass = false;
                bad += " " + cmd + "/" + f;
            }
        }
    }
    set_workers(1);
    o.detail = std::to_string(cmds.size()) + " commands, " + std::to_string(files) +
               " result files compared at workers 1 vs 4" + (bad.empty() ? "; all byte-identical" : "; differ:" + bad);
    return o;
}

}  // namespace

int run(const Options& opt, std::ostream& out) {
    struct Criterion {
        int id;
        const char* name;
        double limit_s;  // 0 = no runtime limit
        std::function<Outcome()> body;
    };
    std::string scratch = opt.scratch_dir;
    if (scratch.empty()) scratch = (fs::temp_directory_path() / "parisi-lab-selftest").string();
    const std::vector<Criterion> all{
        {1, "quantile and decomposition lemmas", 10, c1},
        {2, "PDE closed form and residual", 30, c2},
        {3, "PDE vs cascade oracle", 300, c3},
        {4, "psi identity", 60, c4},
        {5, "Lipschitz stability", 120, c5},
        {6, "characteristics R identity and gradient bound", 120, c6},
        {7, "d psi / dq vs finite differences", 180, c7},
        {8, "left endpoint", 120, c8},
        {9, "jump transfer", 180, c9},
        {10, "simultaneous RSB", 600, c10},
        {11, "determinism across worker counts", 0, [&] { return c11(scratch); }},
    };
    int failed = 0, ran = 0;
    for (const Criterion& c : all) {
        if (!opt.only.empty() && std::find(opt.only.begin(), opt.only.end(), c.id) == opt.only.end()) continue;
        set_workers(opt.workers);
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.body();
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = c.limit_s <= 0.0 || secs < c.limit_s;
        const bool pass = r.pass && in_time;
        ++ran;
        if (!pass) ++failed;
        char timing[96];
        if (c.limit_s > 0.0) std::snprintf(timing, sizeof timing, "%.1f s (limit %.0f s)", secs, c.limit_s);
        else std::snprintf(timing, sizeof timing, "%.1f s", secs);
        out << (pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.name << ": " << r.detail << "; " << timing
            << (in_time ? "" : " OVER TIME LIMIT") << std::endl;
    }
    out << ran - failed << "/" << ran << " criteria passed" << std::endl;
    return failed == 0 ? 0 : 1;
}

}  // namespace parisi::selftest
