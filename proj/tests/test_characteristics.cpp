#include <cmath>
#include <functional>

#include "doctest.h"
#include "parisi/characteristics.hpp"
#include "parisi/parallel.hpp"
#include "parisi/parisi_pde.hpp"
#include "parisi/psd.hpp"

using namespace parisi;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }

StepPath scalar(const std::vector<double>& bp, const std::vector<double>& v) {
    StepPath q;
    q.breakpoints = bp;
    for (double x : v) q.values.push_back(m1(x));
    return q;
}

double gauss_expect(const std::function<double(double)>& f) {
    const int n = 20000;
    const double h = 24.0 / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double g = -12.0 + i * h;
        acc += (i == 0 || i == n ? 0.5 : 1.0) * f(g) * std::exp(-0.5 * g * g);
    }
    return acc * h / std::sqrt(2.0 * M_PI);
}

CharOptions small(int n = 20000) {
    CharOptions o;
    o.n_paths = n;
    o.dt_rel = 4e-3;
    return o;
}

}  // namespace

TEST_CASE("zero drift before T: Brownian law and terminal Hessian") {
    const double T = 0.5;
    Decomposition d;
    d.L.knots = {0.0, T};
    d.L.values = {m1(0.0), m1(T)};
    d.alpha.t = {0.0, T};
    d.alpha.level = {0.0, 1.0};
    d.alpha.domain_end = T;
    d.pinned = true;
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(), d);
    const CharacteristicEnsemble ens = simulate(sol, X0Spec::fixed(Vec::Zero(1)), small(), 1);
    const auto& last = ens.steps.back();
    CHECK(last.t == doctest::Approx(T));
    CHECK(std::abs(last.xx.mean(0, 0) - 2 * T) <= 3 * last.xx.se(0, 0));
    const double hess =
        gauss_expect([&](double g) { const double th = std::tanh(std::sqrt(2 * T) * g); return 1 - th * th; });
    const MatEstimate a = ens.a_at(ens.record_index(T));
    CHECK(std::abs(a.mean(0, 0) - hess) <= 3 * a.se(0, 0) + 1e-4);
}

TEST_CASE("symmetric start has R(0) = 0 and R increases") {
    const StepPath q = scalar({0.0, 0.4}, {0.2, 0.6});
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(), canonical_decomposition(q));
    const CharacteristicEnsemble ens = simulate(sol, X0Spec::fixed(Vec::Zero(1)), small(), 2);
    CHECK(std::abs(ens.R_at(0).mean(0, 0)) < 1e-12);
    for (std::size_t r = 1; r < ens.record_times.size(); ++r) {
        const MatEstimate a = ens.R_at(static_cast<int>(r) - 1), b = ens.R_at(static_cast<int>(r));
        CHECK(b.mean(0, 0) - a.mean(0, 0) >= -3 * std::hypot(a.se(0, 0), b.se(0, 0)));
    }
    CHECK(check_R_identity(ens).pass(3.0));
}

TEST_CASE("single atom at the origin has identically zero residuals") {
    const ParisiSolution sol =
        solve_parisi(SpinMeasure::dirac(Vec::Zero(1)), canonical_decomposition(scalar({0.0, 0.4}, {0.2, 0.6})));
    const RIdentityReport r = check_R_identity(simulate(sol, X0Spec::fixed(Vec::Zero(1)), small(2000), 3));
    CHECK(r.max_abs == 0.0);
    CHECK(r.pass());
}

TEST_CASE("grad_psi examples") {
    GradPsiOptions o;
    o.ch = small();
    o.fd_check = false;
    const GradPsiResult sym = grad_psi(SpinMeasure::ising(), StepPath::zero(1), o, 4);
    CHECK(sym.p.is_zero());
    const GradPsiResult asym = grad_psi(SpinMeasure::ising(0.7), StepPath::zero(1), o, 4);
    CHECK(asym.p.values.front()(0, 0) == doctest::Approx(0.16).epsilon(1e-12));

    o.fd_check = true;
    const GradPsiResult c = grad_psi(SpinMeasure::ising(), StepPath::constant(m1(0.3)), o, 5);
    CHECK(c.p.levels() == 1);
    CHECK(c.fd_ok);
    CHECK(c.repair_ok);
    CHECK_NOTHROW(c.p.validate());
}

TEST_CASE("functional derivative examples") {
    const StepPath q = StepPath::constant(m1(0.3));
    const Vec x0 = Vec::Constant(1, 0.2);
    LipschitzPath zero;
    zero.knots = {0.0, 0.3};
    zero.values = {m1(0.0), m1(0.0)};
    CHECK(functional_derivative(SpinMeasure::ising(), q, zero, x0, small(4000), {}, 6).mean == 0.0);
    LipschitzPath lin;
    lin.knots = {0.0, 0.3};
    lin.values = {m1(0.0), m1(0.3)};
    CHECK(functional_derivative(SpinMeasure::dirac(Vec::Zero(1)), q, lin, x0, small(4000), {}, 6).mean == 0.0);

    const Decomposition d = canonical_decomposition(q);
    Decomposition de = d;
    const double eps = 1e-4;
    for (std::size_t i = 0; i < de.L.knots.size(); ++i) de.L.values[i] += eps * lin(de.L.knots[i]);
    const double fd = (solve_parisi(SpinMeasure::ising(), de).eval(0.0, x0).value -
                       solve_parisi(SpinMeasure::ising(), d).eval(0.0, x0).value) / eps;
    const ScalarEstimate e = functional_derivative(SpinMeasure::ising(), q, lin, x0, small(), {}, 7);
    CHECK(std::abs(e.mean - fd) <= 1e-3 + 3 * e.se);
}

TEST_CASE("left endpoint with q(0) = 0") {
    GradPsiOptions o;
    o.ch = small();
    o.fd_check = false;
    const LeftEndpointReport r = left_endpoint_check(SpinMeasure::ising(0.7), StepPath::zero(1), o, 50, 8);
    CHECK(r.pass);
    CHECK(r.rhs(0, 0) == doctest::Approx(0.16));
    CHECK(r.V.norm() == 0.0);
}

TEST_CASE("ensembles do not depend on the worker count") {
    const StepPath q = scalar({0.0, 0.4}, {0.2, 0.6});
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(0.6), canonical_decomposition(q));
    set_workers(1);
    const CharacteristicEnsemble a = simulate(sol, X0Spec::fixed(Vec::Zero(1)), small(4000), 9);
    set_workers(3);
    const CharacteristicEnsemble b = simulate(sol, X0Spec::fixed(Vec::Zero(1)), small(4000), 9);
    set_workers(1);
    for (std::size_t r = 0; r < a.record_times.size(); ++r) {
        CHECK(a.R_at(static_cast<int>(r)).mean == b.R_at(static_cast<int>(r)).mean);
        CHECK(a.a_at(static_cast<int>(r)).se == b.a_at(static_cast<int>(r)).se);
    }
}
