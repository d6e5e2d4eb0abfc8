#include <cmath>

#include "doctest.h"
#include "parisi/parisi_pde.hpp"
#include "parisi/psd.hpp"
#include "parisi/rsb.hpp"

using namespace parisi;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

StepPath scalar(const std::vector<double>& bp, const std::vector<double>& v) {
    StepPath q;
    q.breakpoints = bp;
    for (double x : v) q.values.push_back(m1(x));
    return q;
}

XiModel coupled() {
    XiModel xi;
    xi.dim = 2;
    xi.terms = {Monomial{1.0, {{0, 0, 2}}}, Monomial{1.0, {{1, 1, 2}}}, Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    return xi;
}

XiModel decoupled() {
    XiModel xi;
    xi.dim = 2;
    xi.terms = {Monomial{1.0, {{0, 0, 2}}}};
    return xi;
}

GradPsiOptions small(int n = 10000) {
    GradPsiOptions o;
    o.ch.n_paths = n;
    o.ch.dt_rel = 4e-3;
    o.fd_check = false;
    return o;
}

CriticalOptions small_critical() {
    CriticalOptions o;
    o.inner = small();
    o.inner.ch.gap_steps = 100;
    o.final_eval = small();
    return o;
}

// A critical point carrying an exactly known p with zero Monte Carlo error.
CriticalPoint synthetic(const std::vector<Mat>& values) {
    CriticalPoint cp;
    StepPath p;
    p.dim = static_cast<int>(values.front().rows());
    for (std::size_t k = 0; k < values.size(); ++k) p.breakpoints.push_back(0.3 * static_cast<double>(k));
    p.values = values;
    cp.p = p;
    cp.grad.p = p;
    cp.grad.p_raw = p;
    cp.grad.se.assign(values.size(), Mat::Zero(p.dim, p.dim));
    cp.grad.record_of_level.assign(values.size(), -1);
    return cp;
}

Mat diag2(double a, double b) {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

}  // namespace

TEST_CASE("evaluate_J examples") {
    const SpinMeasure mu = SpinMeasure::ising();
    const XiModel xi = XiModel::sk(1.0);
    const StepPath zero = StepPath::zero(1);
    CHECK(evaluate_J(0.7, zero, zero, zero, mu, xi) == doctest::Approx(0.0));

    const StepPath q = scalar({0.0, 0.4}, {0.2, 0.6});
    const StepPath p = scalar({0.0, 0.5}, {0.1, 0.5});
    const double int_xi = 0.5 * 0.01 + 0.5 * 0.25;
    CHECK(evaluate_J(0.3, q, q, p, mu, xi) == doctest::Approx(psi_value(mu, q) + 0.3 * int_xi).epsilon(1e-12));

    // d/dt J = int xi(p) and d/dq J = p at fixed (q', p)
    const double h = 1e-3;
    const double dt = (evaluate_J(0.3 + h, q, q, p, mu, xi) - evaluate_J(0.3 - h, q, q, p, mu, xi)) / (2 * h);
    CHECK(dt == doctest::Approx(int_xi).epsilon(1e-8));
    const StepPath d = scalar({0.0, 0.7}, {0.1, 0.4});
    StepPath qe = q;
    const auto grid = merged_breakpoints(q, d);
    qe = refine(q, grid);
    const StepPath de = refine(d, grid);
    for (std::size_t k = 0; k < qe.values.size(); ++k) qe.values[k] += h * de.values[k];
    const double dq = (evaluate_J(0.3, qe, q, p, mu, xi) - evaluate_J(0.3, q, q, p, mu, xi)) / h;
    CHECK(dq == doctest::Approx(integrate_pair(p, d, [](const Mat& a, const Mat& b) { return dot(a, b); }))
                    .epsilon(1e-8));
}

TEST_CASE("shift_by_grad_xi") {
    const StepPath q = scalar({0.0, 0.4}, {0.2, 0.6});
    const StepPath p = scalar({0.0, 0.5}, {0.1, 0.5});
    const StepPath s = shift_by_grad_xi(q, XiModel::sk(1.0), p, 0.5);
    CHECK(eval_path(s, 0.45, Side::Right)(0, 0) == doctest::Approx(0.6 + 0.5 * 2 * 0.1));
    CHECK(eval_path(s, 0.8, Side::Right)(0, 0) == doctest::Approx(0.6 + 0.5 * 2 * 0.5));
    const StepPath back = shift_by_grad_xi(s, XiModel::sk(1.0), p, 0.5, -1.0);
    CHECK(path_distance(back, q, Norm::Sup) < 1e-15);
}

TEST_CASE("critical residual and fixed point at the symmetric zero solution") {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath zero = StepPath::zero(1);
    const CriticalResidual r = critical_residual(0.4, zero, zero, zero, mu, XiModel::sk(1.0), small(), 1);
    CHECK(r.r1 == 0.0);
    CHECK(r.r2 <= 3 * r.r2_se + 1e-12);

    const CriticalPoint cp = find_critical_point(0.2, zero, mu, XiModel::sk(1.0), zero, small_critical(), 2);
    CHECK(cp.converged);
    CHECK(cp.iterations == 1);
    CHECK(cp.p.is_zero());
}

TEST_CASE("perturbing p increases r2 roughly linearly") {
    const SpinMeasure mu = SpinMeasure::ising(0.7);
    const StepPath q = StepPath::zero(1);
    const XiModel xi = XiModel::sk(1.0);
    std::vector<double> r2;
    for (double eps : {0.05, 0.1, 0.2}) {
        const StepPath p = StepPath::constant(m1(0.16 + eps));
        const StepPath qp = shift_by_grad_xi(q, xi, p, 0.0);
        r2.push_back(critical_residual(0.0, q, qp, p, mu, xi, small(), 3).r2);
    }
    CHECK(r2[0] == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(r2[2] / r2[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("isotonic repair yields an increasing PSD path") {
    StepPath p;
    p.dim = 2;
    p.breakpoints = {0.0, 0.3, 0.6};
    p.values = {diag2(0.1, 0.2), diag2(0.3, 0.1), diag2(0.2, 0.5)};
    const StepPath r = isotonic_repair(p);
    CHECK_NOTHROW(r.validate());
    const StepPath ok = scalar({0.0, 0.5}, {0.1, 0.3});
    CHECK(path_distance(isotonic_repair(ok), ok, Norm::Sup) < 1e-15);
}

TEST_CASE("jump transfer examples") {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath qp = scalar({0.0, 0.4}, {0.2, 0.6});
    const StepPath p = scalar({0.0, 0.4}, {0.2, 0.5});
    const JumpTransfer none = jump_transfer(p, qp, mu, 0.2, small(), 4);
    CHECK_FALSE(none.jump);
    CHECK(none.formula.mean.norm() == 0.0);
    CHECK(none.dp.norm() == 0.0);

    const JumpTransfer origin = jump_transfer(p, qp, SpinMeasure::dirac(Vec::Zero(1)), 0.4, small(4000), 5);
    CHECK(origin.formula.mean.norm() == 0.0);
}

TEST_CASE("simultaneous RSB classification on known increments") {
    SUBCASE("zero path") {
        const RsbReport r = simultaneous_rsb_report(synthetic({Mat::Zero(2, 2), Mat::Zero(2, 2)}), coupled(), {});
        CHECK(r.nonzero == 0);
        CHECK(r.violations == 0);
        CHECK(r.simultaneous);
    }
    SUBCASE("definite increment under the coupled model") {
        const RsbReport r = simultaneous_rsb_report(synthetic({diag2(0.1, 0.1), diag2(0.4, 0.3)}), coupled(), {});
        CHECK(r.coupled);
        REQUIRE(r.pairs.size() == 1);
        CHECK(r.pairs[0].cls == "pd");
        CHECK(r.violations == 0);
    }
    SUBCASE("singular increment under the coupled model is a violation") {
        const RsbReport r = simultaneous_rsb_report(synthetic({diag2(0.1, 0.1), diag2(0.4, 0.1)}), coupled(), {});
        CHECK(r.pairs[0].cls == "psd-singular");
        CHECK(r.violations == 1);
        CHECK_FALSE(r.simultaneous);
    }
    SUBCASE("singular increment under the decoupled control is allowed") {
        const RsbReport r = simultaneous_rsb_report(synthetic({diag2(0.1, 0.1), diag2(0.4, 0.1)}), decoupled(), {});
        CHECK_FALSE(r.coupled);
        CHECK(r.violations == 0);
        CHECK_FALSE(r.simultaneous);
    }
}

TEST_CASE("multi-species gradients") {
    MultiSpeciesModel m;
    m.names = {"a", "b"};
    m.lambda = {0.5, 0.5};
    m.mu = {SpinMeasure::ising(), SpinMeasure::ising()};
    m.xi.dim = 2;
    m.xi.terms = {Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    CHECK(ms_coupled(m, 0, 1));
    CHECK(ms_coupled(m, 1, 0));
    const Vec g = ms_xi_grad(m, Vec::Constant(2, 0.3));
    CHECK(g(0) == doctest::Approx(0.3));

    MultiSpeciesModel d = m;
    d.xi.terms = {Monomial{1.0, {{0, 0, 2}}}, Monomial{1.0, {{1, 1, 2}}}};
    CHECK_FALSE(ms_coupled(d, 0, 1));

    const StepPath q = scalar({0.0, 0.5}, {0.1, 0.3});
    const MultiGrad same = multispecies_grad_psi(m, {q, q}, small(), 6);
    CHECK(path_distance(same.p[0], same.p[1], Norm::Sup) <= 3 * (same.per_species[0].max_se + same.per_species[1].max_se));

    const MultiGrad zero = multispecies_grad_psi(m, {StepPath::zero(1), q}, small(), 6);
    CHECK(zero.p[0].is_zero());

    MultiSpeciesModel scaled = m;
    scaled.lambda = {0.5, 1.0};
    const MultiGrad a = multispecies_grad_psi(m, {q, q}, small(), 7);
    const MultiGrad b = multispecies_grad_psi(scaled, {q, q}, small(), 7);
    for (std::size_t k = 0; k < a.p[1].values.size(); ++k)
        CHECK(b.p[1].values[k](0, 0) == doctest::Approx(2 * a.p[1].values[k](0, 0)).epsilon(1e-12));
    CHECK_THROWS(scaled.validate(true));
}

TEST_CASE("identical symmetric species at t = 0 stay at zero") {
    MultiSpeciesModel m;
    m.lambda = {0.5, 0.5};
    m.mu = {SpinMeasure::ising(), SpinMeasure::ising()};
    m.xi.dim = 2;
    m.xi.terms = {Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    const MsCriticalPoint cp =
        find_ms_critical_point(m, 0.0, {StepPath::zero(1), StepPath::zero(1)}, {StepPath::zero(1), StepPath::zero(1)},
                               small_critical(), 8);
    CHECK(cp.converged);
    CHECK(cp.p[0].is_zero());
    CHECK(cp.p[1].is_zero());
    const MsReport r = multispecies_rsb_report(m, cp);
    CHECK(r.violations == 0);
    CHECK(r.jumps_coincide);
}
