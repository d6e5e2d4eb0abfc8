#include "parisi/rsb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "parisi/rng.hpp"

namespace parisi {

namespace {

std::vector<double> union_grid(const std::vector<const StepPath*>& paths) {
    std::vector<double> g;
    for (const StepPath* p : paths) g.insert(g.end(), p->breakpoints.begin(), p->breakpoints.end());
    std::sort(g.begin(), g.end());
    std::vector<double> out;
    for (double x : g)
        if (out.empty() || x - out.back() > 1e-14) out.push_back(x);
    return out;
}

std::vector<double> piece_widths(const std::vector<double>& grid) {
    std::vector<double> w(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) w[k] = (k + 1 < grid.size() ? grid[k + 1] : 1.0) - grid[k];
    return w;
}

double sup_distance(const StepPath& a, const StepPath& b) { return path_distance(a, b, Norm::Sup); }

Mat diag_of(const Vec& a) {
    Mat m = Mat::Zero(a.size(), a.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) m(i, i) = a(i);
    return m;
}


int level_at(const StepPath& q, double s) {
    for (std::size_t k = 0; k < q.breakpoints.size(); ++k)
        if (std::abs(q.breakpoints[k] - s) <= 1e-12) return static_cast<int>(k);
    return -1;
}

double combined_z(const Mat& a, const Mat& b, const Mat& se_a, const Mat& se_b) {
    double z = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const double diff = std::abs(a(i, j) - b(i, j));
            const double s = std::hypot(se_a(i, j), se_b(i, j));
            const double zz = diff <= 1e-12 ? 0.0 : (s > 0.0 ? diff / s : std::numeric_limits<double>::infinity());
            z = std::max(z, zz);
        }
    return z;
}

}  // namespace

StepPath grad_xi_path(const XiModel& xi, const StepPath& p) {
    StepPath g;
    g.dim = p.dim;
    g.breakpoints = p.breakpoints;
    for (const Mat& v : p.values) g.values.push_back(xi_grad_sym(xi, v));
    return g;
}

StepPath shift_by_grad_xi(const StepPath& q, const XiModel& xi, const StepPath& p, double t, double sign) {
    if (q.dim != p.dim || xi.dim != p.dim) throw std::invalid_argument("shift_by_grad_xi: dimension mismatch");
    const auto grid = union_grid({&q, &p});
    StepPath a = refine(q, grid);
    const StepPath b = refine(p, grid);
    for (std::size_t k = 0; k < a.values.size(); ++k)
        a.values[k] = symmetrize(a.values[k] + sign * t * xi_grad_sym(xi, b.values[k]));
    return a;
}

double evaluate_J(double t, const StepPath& q, const StepPath& qprime, const StepPath& p, const SpinMeasure& mu,
                  const XiModel& xi, const GridSpec& grid) {
    if (q.dim != qprime.dim || q.dim != p.dim || q.dim != mu.dim || xi.dim != q.dim)
        throw std::invalid_argument("evaluate_J: dimension mismatch");
    const auto g = union_grid({&q, &qprime, &p});
    const auto w = piece_widths(g);
    const StepPath a = refine(q, g), b = refine(qprime, g), c = refine(p, g);
    double lin = 0.0, xs = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        lin += w[k] * dot(c.values[k], a.values[k] - b.values[k]);
        xs += w[k] * xi_eval(xi, c.values[k]);
    }
    return psi_value(mu, qprime, grid) + lin + t * xs;
}

CriticalResidual critical_residual(double t, const StepPath& q, const StepPath& qprime, const StepPath& p,
                                   const SpinMeasure& mu, const XiModel& xi, const GradPsiOptions& opt,
                                   std::uint64_t seed) {
    CriticalResidual r;
    r.r1 = path_distance(shift_by_grad_xi(q, xi, p, t), qprime, Norm::L1);
    GradPsiOptions o = opt;
    o.fd_check = false;
    const GradPsiResult g = grad_psi(mu, qprime, o, seed);
    const auto grid = union_grid({&p, &g.p_raw});
    const auto w = piece_widths(grid);
    const StepPath a = refine(p, grid), b = refine(g.p_raw, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        r.r2 += w[k] * frob(a.values[k] - b.values[k]);
        // index of the grad_psi level containing this piece
        int j = 0;
        while (j + 1 < g.p_raw.levels() && g.p_raw.breakpoints[static_cast<std::size_t>(j + 1)] <= grid[k] + 1e-14) ++j;
        r.r2_se += w[k] * frob(g.se[static_cast<std::size_t>(j)]);
    }
    return r;
}

StepPath isotonic_repair(const StepPath& p) {
    StepPath out = p;
    Mat run = Mat::Zero(p.dim, p.dim), prev = Mat::Zero(p.dim, p.dim);
    for (std::size_t k = 0; k < p.values.size(); ++k) {
        const Mat raw = symmetrize(p.values[k]);
        run += project_psd(symmetrize(raw - prev));
        prev = raw;
        out.values[k] = run;
    }
    return out;
}

CriticalPoint find_critical_point(double t, const StepPath& q, const SpinMeasure& mu, const XiModel& xi,
                                  const StepPath& p_init, const CriticalOptions& opt, std::uint64_t seed) {
    if (!(t >= 0.0)) throw std::invalid_argument("find_critical_point: t must be >= 0");
    if (!(opt.damping > 0.0 && opt.damping <= 1.0))
        throw std::invalid_argument("find_critical_point: damping must lie in (0, 1]");
    q.validate();
    p_init.validate();
    const auto grid = union_grid({&q, &p_init});
    CriticalPoint cp;
    cp.t = t;
    cp.q = refine(q, grid);
    cp.p = refine(p_init, grid);

    GradPsiOptions inner = opt.inner;
    inner.fd_check = false;
    const std::uint64_t iter_seed = stream_seed(seed, 0x69746572ULL);
    std::vector<Mat> inner_se;
    for (int it = 0; it < opt.max_iter; ++it) {
        const StepPath qp = shift_by_grad_xi(cp.q, xi, cp.p, t);
        const GradPsiResult g = grad_psi(mu, qp, inner, iter_seed);
        StepPath next = cp.p;
        for (std::size_t k = 0; k < next.values.size(); ++k)
            next.values[k] = (1.0 - opt.damping) * cp.p.values[k] + opt.damping * g.p.values[k];
        next = isotonic_repair(next);
        const double d = sup_distance(next, cp.p);
        cp.trajectory.push_back(d);
        cp.p = next;
        cp.iterations = it + 1;
        inner_se = g.se;
        if (d < opt.tol) {
            cp.converged = true;
            break;
        }
    }
    cp.qprime = shift_by_grad_xi(cp.q, xi, cp.p, t);
    cp.grad = grad_psi(mu, cp.qprime, opt.final_eval, stream_seed(seed, 0x66696e61ULL));

    cp.residual.r1 = path_distance(shift_by_grad_xi(cp.q, xi, cp.p, t), cp.qprime, Norm::L1);
    const auto w = piece_widths(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        cp.residual.r2 += w[k] * frob(cp.p.values[k] - cp.grad.p_raw.values[k]);
        // p carries the iteration's Monte Carlo error on top of the final evaluation's
        const Mat se_in = k < inner_se.size() ? inner_se[k] : Mat::Zero(q.dim, q.dim);
        cp.residual.r2_se += w[k] * std::hypot(frob(cp.grad.se[k]), frob(se_in));
    }
    return cp;
}

// ---------------------------------------------------------------------------

JumpTransfer jump_transfer(const StepPath& p, const StepPath& qprime, const SpinMeasure& mu, double s,
                           const GradPsiOptions& opt, std::uint64_t seed) {
    if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("jump_transfer: s must lie in (0, 1)");
    if (p.dim != qprime.dim || p.dim != mu.dim) throw std::invalid_argument("jump_transfer: dimension mismatch");
    const int D = p.dim;
    JumpTransfer jt;
    jt.s = s;
    jt.dq = eval_path(qprime, s, Side::Right) - eval_path(qprime, s, Side::Left);
    jt.dp = eval_path(p, s, Side::Right) - eval_path(p, s, Side::Left);
    jt.dp_se = Mat::Zero(D, D);
    jt.formula = {Mat::Zero(D, D), Mat::Zero(D, D)};
    jt.jump = jt.dq.cwiseAbs().maxCoeff() > 0.0 || jt.dp.cwiseAbs().maxCoeff() > 0.0;
    if (!jt.jump) return jt;

    const JointDecomposition jd = joint_canonical_decomposition({p, qprime});
    jt.t = quantile_inverse(jd.alpha, s);
    jt.t_star = quantile_inverse_right(jd.alpha, s);
    if (jt.dq.cwiseAbs().maxCoeff() == 0.0 || !(jt.t_star > jt.t)) {
        jt.max_z = combined_z(jt.formula.mean, jt.dp, jt.formula.se, jt.dp_se);
        return jt;
    }
    Decomposition dec;
    dec.L = jd.L[1];
    dec.alpha = jd.alpha;
    dec.pinned = true;
    const ParisiSolution sol = solve_parisi(mu, dec, opt.grid);
    CharOptions ch = opt.ch;
    ch.record_times.push_back(jt.t);
    ch.record_times.push_back(jt.t_star);
    const CharacteristicEnsemble ens = simulate(sol, X0Spec::fixed(Vec::Zero(D)), ch, seed);
    const int r1 = ens.record_index(jt.t), r2 = ens.record_index(jt.t_star);
    if (r1 < 0 || r2 < 0) throw std::logic_error("jump_transfer: t or t* is not a record time");
    MatEstimate e = ens.quad_integral(r1, r2, jt.dq / (jt.t_star - jt.t));
    jt.formula.mean = symmetrize(2.0 * e.mean);
    jt.formula.se = 2.0 * e.se;
    jt.max_z = combined_z(jt.formula.mean, jt.dp, jt.formula.se, jt.dp_se);
    return jt;
}

JumpTransfer jump_transfer(const CriticalPoint& cp, const SpinMeasure& mu, double s, const GradPsiOptions& opt,
                           std::uint64_t seed) {
    const StepPath& p = cp.grad.p;
    JumpTransfer jt = jump_transfer(p, cp.qprime, mu, s, opt, seed);
    const int k = level_at(cp.qprime, s);
    if (k > 0) {
        const MatEstimate inc = level_increment(cp.grad, k - 1, k);
        jt.dp = inc.mean;
        jt.dp_se = inc.se;
        jt.max_z = combined_z(jt.formula.mean, jt.dp, jt.formula.se, jt.dp_se);
    }
    return jt;
}

// ---------------------------------------------------------------------------

RsbReport simultaneous_rsb_report(const CriticalPoint& cp, const XiModel& xi, const std::vector<Vec>& directions,
                                  int coupling_samples, std::uint64_t seed) {
    const int D = cp.grad.p.dim;
    RsbReport rep;
    rep.directions = directions;
    if (rep.directions.empty())
        for (int i = 0; i < D; ++i) rep.directions.push_back(Vec::Unit(D, i));
    std::uint64_t call = 0;
    for (const Vec& y : rep.directions)
        for (const Vec& z : rep.directions) {
            const CouplingResult c = is_y_to_z_coupled(xi, y, z, coupling_samples, stream_seed(seed, {call++}));
            rep.coupled = rep.coupled && c.coupled;
        }

    const int K = cp.grad.p.levels();
    for (int k1 = 0; k1 < K; ++k1)
        for (int k2 = k1 + 1; k2 < K; ++k2) {
            RsbPair pr;
            pr.k1 = k1;
            pr.k2 = k2;
            pr.s1 = cp.grad.p.breakpoints[static_cast<std::size_t>(k1)];
            pr.s2 = cp.grad.p.breakpoints[static_cast<std::size_t>(k2)];
            const MatEstimate inc = level_increment(cp.grad, k1, k2);
            pr.delta = symmetrize(inc.mean);
            pr.se = inc.se;
            const SymEig e = sym_eig(pr.delta);
            pr.min_eig = e.values.minCoeff();
            pr.max_abs_eig = e.values.cwiseAbs().maxCoeff();
            pr.threshold = 3.0 * frob(pr.se);
            if (pr.max_abs_eig <= pr.threshold || pr.max_abs_eig <= 1e-12)
                pr.cls = "zero";
            else if (pr.min_eig > pr.threshold)
                pr.cls = "pd";
            else if (pr.min_eig >= -pr.threshold)
                pr.cls = "psd-singular";
            else
                pr.cls = "indefinite";
            for (const Vec& y : rep.directions) pr.directional.push_back(y.dot(pr.delta * y));
            if (pr.cls != "zero") {
                ++rep.nonzero;
                if (pr.cls != "pd") rep.simultaneous = false;
                if (rep.coupled && pr.cls != "pd") {
                    pr.violation = true;
                    ++rep.violations;
                }
            }
            rep.pairs.push_back(std::move(pr));
        }
    return rep;
}

// ---------------------------------------------------------------------------

void MultiSpeciesModel::validate(bool normalized) const {
    const int S = species();
    if (S < 1) throw std::invalid_argument("MultiSpeciesModel: need at least one species");
    if (static_cast<int>(mu.size()) != S) throw std::invalid_argument("MultiSpeciesModel: one measure per species");
    if (!names.empty() && static_cast<int>(names.size()) != S)
        throw std::invalid_argument("MultiSpeciesModel: one name per species");
    double total = 0.0;
    for (double l : lambda) {
        if (!(l > 0.0)) throw std::invalid_argument("MultiSpeciesModel: weights must be positive");
        total += l;
    }
    if (normalized && std::abs(total - 1.0) > 1e-12)
        throw std::invalid_argument("MultiSpeciesModel: weights must sum to 1");
    for (const SpinMeasure& m : mu) {
        m.validate();
        if (m.dim != 1) throw std::invalid_argument("MultiSpeciesModel: species measures must be one-dimensional");
        if (m.max_norm() > 1.0 + 1e-12) throw std::invalid_argument("MultiSpeciesModel: atoms must lie in [-1, 1]");
    }
    xi.validate();
    if (xi.dim != S) throw std::invalid_argument("MultiSpeciesModel: xi dimension must equal the species count");
    for (const Monomial& t : xi.terms)
        for (const Monomial::Power& pw : t.powers)
            if (pw.i != pw.j) throw std::invalid_argument("MultiSpeciesModel: xi may only use the entries (s,s)");
}

Vec ms_xi_grad(const MultiSpeciesModel& m, const Vec& a) {
    const Mat g = xi_grad(m.xi, diag_of(a));
    return g.diagonal();
}

bool ms_coupled(const MultiSpeciesModel& m, int s, int s2, int samples, std::uint64_t seed) {
    const int S = m.species();
    std::mt19937_64 gen(stream_seed(seed, {0x6d73ULL, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(s2)}));
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int n = 0; n < samples; ++n) {
        Vec b(S), a(S);
        for (int i = 0; i < S; ++i) {
            b(i) = n % 4 == 0 ? 0.0 : ud(gen);
            // other coordinates stay put half of the time so degenerate directions are probed
            const double step = i == s ? 0.05 + ud(gen) : (ud(gen) < 0.5 ? 0.0 : ud(gen));
            a(i) = b(i) + step;
        }
        const double ga = ms_xi_grad(m, a)(s2), gb = ms_xi_grad(m, b)(s2);
        if (!(ga - gb > 1e-12)) return false;
    }
    return true;
}

MultiGrad multispecies_grad_psi(const MultiSpeciesModel& m, const std::vector<StepPath>& q,
                                const GradPsiOptions& opt, std::uint64_t seed) {
    m.validate(false);
    const int S = m.species();
    if (static_cast<int>(q.size()) != S) throw std::invalid_argument("multispecies_grad_psi: one path per species");
    MultiGrad out;
    for (int s = 0; s < S; ++s) {
        if (q[static_cast<std::size_t>(s)].dim != 1)
            throw std::invalid_argument("multispecies_grad_psi: species paths must be one-dimensional");
        GradPsiResult g = grad_psi(m.mu[static_cast<std::size_t>(s)], q[static_cast<std::size_t>(s)], opt,
                                   stream_seed(seed, {0x737063ULL, static_cast<std::uint64_t>(s)}));
        StepPath p = g.p;
        const double l = m.lambda[static_cast<std::size_t>(s)];
        for (Mat& v : p.values) v *= l;
        out.p.push_back(std::move(p));
        out.per_species.push_back(std::move(g));
    }
    return out;
}

namespace {

std::vector<StepPath> ms_shift(const MultiSpeciesModel& m, double t, const std::vector<StepPath>& q,
                               const std::vector<StepPath>& p) {
    const int S = m.species();
    const std::size_t K = q.front().values.size();
    std::vector<StepPath> out = q;
    for (std::size_t k = 0; k < K; ++k) {
        Vec a(S);
        for (int s = 0; s < S; ++s) a(s) = p[static_cast<std::size_t>(s)].values[k](0, 0);
        const Vec g = ms_xi_grad(m, a);
        for (int s = 0; s < S; ++s) out[static_cast<std::size_t>(s)].values[k](0, 0) += t * g(s);
    }
    return out;
}

}  // namespace

MsCriticalPoint find_ms_critical_point(const MultiSpeciesModel& m, double t, const std::vector<StepPath>& q,
                                       const std::vector<StepPath>& p_init, const CriticalOptions& opt,
                                       std::uint64_t seed) {
    m.validate();
    const int S = m.species();
    if (static_cast<int>(q.size()) != S || static_cast<int>(p_init.size()) != S)
        throw std::invalid_argument("find_ms_critical_point: one path per species");
    if (!(t >= 0.0)) throw std::invalid_argument("find_ms_critical_point: t must be >= 0");
    std::vector<const StepPath*> all;
    for (const auto& x : q) all.push_back(&x);
    for (const auto& x : p_init) all.push_back(&x);
    const auto grid = union_grid(all);
    MsCriticalPoint cp;
    cp.t = t;
    for (int s = 0; s < S; ++s) {
        cp.q.push_back(refine(q[static_cast<std::size_t>(s)], grid));
        cp.p.push_back(refine(p_init[static_cast<std::size_t>(s)], grid));
    }
    GradPsiOptions inner = opt.inner;
    inner.fd_check = false;
    const std::uint64_t iter_seed = stream_seed(seed, 0x69746572ULL);
    std::vector<std::vector<Mat>> inner_se(static_cast<std::size_t>(S));
    for (int it = 0; it < opt.max_iter; ++it) {
        const auto qp = ms_shift(m, t, cp.q, cp.p);
        const MultiGrad g = multispecies_grad_psi(m, qp, inner, iter_seed);
        double d = 0.0;
        for (int s = 0; s < S; ++s) {
            StepPath next = cp.p[static_cast<std::size_t>(s)];
            for (std::size_t k = 0; k < next.values.size(); ++k)
                next.values[k] = (1.0 - opt.damping) * next.values[k] + opt.damping * g.p[static_cast<std::size_t>(s)].values[k];
            next = isotonic_repair(next);
            d = std::max(d, sup_distance(next, cp.p[static_cast<std::size_t>(s)]));
            cp.p[static_cast<std::size_t>(s)] = next;
            inner_se[static_cast<std::size_t>(s)] = g.per_species[static_cast<std::size_t>(s)].se;
        }
        cp.trajectory.push_back(d);
        cp.iterations = it + 1;
        if (d < opt.tol) {
            cp.converged = true;
            break;
        }
    }
    cp.qprime = ms_shift(m, t, cp.q, cp.p);
    cp.grad = multispecies_grad_psi(m, cp.qprime, opt.final_eval, stream_seed(seed, 0x66696e61ULL));
    const auto w = piece_widths(grid);
    for (int s = 0; s < S; ++s) {
        const auto su = static_cast<std::size_t>(s);
        const double l = m.lambda[su];
        for (std::size_t k = 0; k < grid.size(); ++k) {
            cp.r2 += w[k] * std::abs(cp.p[su].values[k](0, 0) - l * cp.grad.per_species[su].p_raw.values[k](0, 0));
            const double se_in = k < inner_se[su].size() ? inner_se[su][k](0, 0) : 0.0;
            cp.r2_se += w[k] * l * std::hypot(cp.grad.per_species[su].se[k](0, 0), se_in);
        }
    }
    const auto again = ms_shift(m, t, cp.q, cp.p);
    for (int s = 0; s < S; ++s)
        cp.r1 += path_distance(again[static_cast<std::size_t>(s)], cp.qprime[static_cast<std::size_t>(s)], Norm::L1);
    return cp;
}

MsReport multispecies_rsb_report(const MultiSpeciesModel& m, const MsCriticalPoint& cp, int coupling_samples,
                                 std::uint64_t seed) {
    const int S = m.species();
    MsReport rep;
    rep.coupled.assign(static_cast<std::size_t>(S), std::vector<char>(static_cast<std::size_t>(S), 0));
    for (int s = 0; s < S; ++s)
        for (int s2 = 0; s2 < S; ++s2)
            rep.coupled[static_cast<std::size_t>(s)][static_cast<std::size_t>(s2)] =
                ms_coupled(m, s, s2, coupling_samples, seed) ? 1 : 0;

    std::vector<std::vector<char>> jumps(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
        const auto su = static_cast<std::size_t>(s);
        const GradPsiResult& g = cp.grad.per_species[su];
        const double l = m.lambda[su];
        rep.increments.emplace_back();
        rep.increment_se.emplace_back();
        rep.jump_levels.emplace_back();
        jumps[su].assign(static_cast<std::size_t>(g.p.levels()), 0);
        for (int k = 1; k < g.p.levels(); ++k) {
            const MatEstimate inc = level_increment(g, k - 1, k);
            const double v = l * inc.mean(0, 0), se = l * inc.se(0, 0);
            rep.increments[su].push_back(v);
            rep.increment_se[su].push_back(se);
            if (v > 3.0 * se && v > 1e-12) {
                rep.jump_levels[su].push_back(k);
                jumps[su][static_cast<std::size_t>(k)] = 1;
            }
        }
    }
    for (int s = 0; s < S; ++s)
        for (int s2 = 0; s2 < S; ++s2) {
            const auto a = static_cast<std::size_t>(s), b = static_cast<std::size_t>(s2);
            if (s != s2 && rep.jump_levels[a] != rep.jump_levels[b]) rep.jumps_coincide = false;
            if (!rep.coupled[a][b]) continue;
            for (std::size_t k = 1; k < jumps[a].size(); ++k)
                if (jumps[a][k] && !jumps[b][k]) ++rep.violations;
        }
    return rep;
}

}  // namespace parisi
