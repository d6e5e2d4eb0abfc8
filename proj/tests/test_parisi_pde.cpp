#include <cmath>
#include <functional>

#include "doctest.h"
#include "parisi/parisi_pde.hpp"
#include "parisi/paths.hpp"

using namespace parisi;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec x1(double v) { return Vec::Constant(1, v); }

// Trapezoid rule for E f(g), g standard normal; independent of the solver's Gauss-Hermite nodes.
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

double log2cosh(double y) { return std::abs(y) + std::log1p(std::exp(-2.0 * std::abs(y))); }

Decomposition linear(double T, std::vector<double> t, std::vector<double> level) {
    Decomposition d;
    d.L.knots = {0.0, T};
    d.L.values = {m1(0.0), m1(T)};
    d.alpha.t = std::move(t);
    d.alpha.level = std::move(level);
    d.alpha.domain_end = T;
    d.pinned = true;
    return d;
}

StepPath two_level() {
    StepPath q;
    q.breakpoints = {0.0, 0.4};
    q.values = {m1(0.2), m1(0.6)};
    return q;
}

}  // namespace

TEST_CASE("terminal_condition examples") {
    const SpinMeasure mu = SpinMeasure::ising();
    for (double x : {-2.0, 0.0, 0.7}) {
        CHECK(terminal_condition(mu, m1(0.0), x1(x)) == doctest::Approx(std::log(std::cosh(x))).epsilon(1e-14));
        CHECK(terminal_condition(mu, m1(0.3), x1(x)) ==
              doctest::Approx(std::log(std::cosh(x)) - 0.3).epsilon(1e-14));
        CHECK(terminal_condition(SpinMeasure::dirac(x1(0.0)), m1(0.3), x1(x)) == 0.0);
    }
    CHECK(std::isfinite(terminal_condition(mu, m1(0.0), x1(800.0))));
}

TEST_CASE("replica symmetric closed form with alpha = 1") {
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(0.5, 2.0), linear(0.8, {0.0}, {1.0}));
    for (double x = -3.0; x <= 3.0; x += 0.25) {
        const FieldValue f = sol.eval(0.0, x1(x));
        CHECK(std::abs(f.value - log2cosh(x)) < 1e-6);
        CHECK(std::abs(f.grad(0) - std::tanh(x)) < 1e-6);
    }
}

TEST_CASE("alpha jumping at T matches a one-dimensional quadrature") {
    const double T = 0.5;
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(0.5, 2.0), linear(T, {0.0, T}, {0.0, 1.0}));
    for (double x : {-1.0, 0.0, 0.4, 2.0}) {
        const double oracle = gauss_expect([&](double g) { return log2cosh(std::sqrt(2.0 * T) * g + x); }) - T;
        CHECK(std::abs(sol.eval(0.0, x1(x)).value - oracle) < 1e-6);
    }
}

TEST_CASE("single atom at the origin gives the zero field") {
    const ParisiSolution sol = solve_parisi(SpinMeasure::dirac(x1(0.0)), canonical_decomposition(two_level()));
    const FieldValue f = sol.eval(0.1, x1(0.5));
    CHECK(std::abs(f.value) < 1e-14);
    CHECK(f.grad.norm() < 1e-14);
    CHECK(f.hess.norm() < 1e-14);
    CHECK(pde_residual(sol, 0.3, x1(0.5)) < 1e-12);
}

TEST_CASE("symmetric Ising has zero gradient at the origin") {
    const ParisiSolution sol = solve_parisi(SpinMeasure::ising(), canonical_decomposition(two_level()));
    for (double t : {0.0, 0.1, 0.3, 0.5})
        CHECK(std::abs(eval_solution(sol, t, x1(0.0), What::Grad)(0, 0)) < 1e-12);
}

TEST_CASE("two-level residual is small and shrinks under refinement") {
    const Decomposition d = canonical_decomposition(two_level());
    double prev = 1e300;
    for (int cells : {64, 128, 256}) {
        GridSpec g;
        g.cells = cells;
        const ParisiSolution sol = solve_parisi(SpinMeasure::ising(), d, g);
        double r = 0.0;
        for (double t : {0.1, 0.3, 0.5})
            for (double x : {-1.0, 0.3, 1.2}) r = std::max(r, pde_residual(sol, t, x1(x)));
        CHECK(r < prev);
        prev = r;
    }
    CHECK(prev <= 5e-3);
}

TEST_CASE("gradient bound and convexity on a D=2 solution") {
    SpinMeasure mu = SpinMeasure::ising_product(2);
    StepPath q;
    q.dim = 2;
    q.breakpoints = {0.0, 0.5};
    Mat a(2, 2), b(2, 2);
    a << 0.1, 0.02, 0.02, 0.1;
    b << 0.3, 0.05, 0.05, 0.2;
    q.values = {a, b};
    GridSpec g;
    g.cells = 48;
    const ParisiSolution sol = solve_parisi(mu, canonical_decomposition(q), g);
    for (double t : {0.0, 0.2, 0.5})
        for (double x : {-1.0, 0.0, 0.8})
            for (double y : {-0.5, 0.6}) {
                Vec v(2);
                v << x, y;
                const FieldValue f = sol.eval(t, v);
                CHECK(f.grad.norm() <= mu.max_norm() + 1e-9);
                CHECK(f.hess.selfadjointView<Eigen::Lower>().eigenvalues().minCoeff() > 0.0);
            }
}

TEST_CASE("psi_value examples") {
    CHECK(psi_value(SpinMeasure::ising(), StepPath::zero(1)) == doctest::Approx(0.0));
    CHECK(psi_value(SpinMeasure::ising(0.5, 3.0), StepPath::zero(1)) == doctest::Approx(-std::log(3.0)));
    for (double h : {0.2, 0.7}) {
        const double oracle = h - gauss_expect([h](double g) { return log2cosh(std::sqrt(2.0 * h) * g) - std::log(2.0); });
        CHECK(std::abs(psi_value(SpinMeasure::ising(), StepPath::constant(m1(h))) - oracle) < 1e-6);
    }
    // frozen from a 1024-cell solve of the two-level path
    CHECK(psi_value(SpinMeasure::ising(), two_level()) == doctest::Approx(0.1185026126).epsilon(1e-6));
}
