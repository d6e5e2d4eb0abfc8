#include <random>

#include "doctest.h"
#include "parisi/psd.hpp"
#include "parisi/spin_models.hpp"

using namespace parisi;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

XiModel cross_only() {
    XiModel xi;
    xi.dim = 2;
    xi.terms = {Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    return xi;
}

XiModel fully_coupled() {
    XiModel xi;
    xi.dim = 2;
    xi.terms = {Monomial{1.0, {{0, 0, 2}}}, Monomial{1.0, {{1, 1, 2}}}, Monomial{1.0, {{0, 0, 1}, {1, 1, 1}}}};
    return xi;
}

Mat random_psd(std::mt19937_64& gen, int D) {
    std::normal_distribution<double> nd;
    Mat g(D, D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
    return g * g.transpose();
}

}  // namespace

TEST_CASE("span_check examples") {
    CHECK(span_check(SpinMeasure::ising()));
    CHECK_FALSE(span_check(SpinMeasure::dirac(v2(1, 0))));
    SpinMeasure m;
    m.dim = 2;
    m.atoms = {v2(1, 0), v2(0, 1), v2(1, 1)};
    m.weights = {1, 1, 1};
    CHECK(span_check(m));
}

TEST_CASE("xi derivative examples") {
    Mat a(2, 2);
    a << 0.3, 0.1, 0.1, 0.7;
    const Mat g = xi_grad_sym(cross_only(), a);
    CHECK(g(0, 0) == doctest::Approx(0.7));
    CHECK(g(1, 1) == doctest::Approx(0.3));
    CHECK(g(0, 1) == 0.0);

    Mat b(2, 2);
    b << 0.5, 0.2, 0.2, 0.9;
    const Mat d = xi_dirderiv(fully_coupled(), a, b);
    CHECK(d(0, 0) == doctest::Approx(2 * 0.5 + 0.9));
    CHECK(d(1, 1) == doctest::Approx(2 * 0.9 + 0.5));
    CHECK(d(0, 1) == doctest::Approx(0.0));

    CHECK(xi_eval(fully_coupled(), Mat::Zero(2, 2)) == 0.0);
    CHECK(xi_eval(XiModel::sk(2.0), Mat::Constant(1, 1, 0.5)) == doctest::Approx(1.0));
}

TEST_CASE("coupling examples") {
    CHECK(is_y_to_z_coupled(cross_only(), v2(1, 0), v2(0, 1), 200, 1).coupled);
    XiModel diag_only;
    diag_only.dim = 2;
    diag_only.terms = {Monomial{1.0, {{0, 0, 2}}}};
    const CouplingResult r = is_y_to_z_coupled(diag_only, v2(1, 0), v2(0, 1), 200, 1);
    CHECK_FALSE(r.coupled);
    CHECK(r.witness_a.has_value());
    std::mt19937_64 gen(5);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 10; ++i)
        CHECK(is_y_to_z_coupled(fully_coupled(), v2(nd(gen), nd(gen)), v2(nd(gen), nd(gen)), 200, i).coupled);
}

TEST_CASE("xi_dirderiv matches finite differences of the gradient") {
    std::mt19937_64 gen(9);
    XiModel xi = fully_coupled();
    xi.terms.push_back(Monomial{0.5, {{0, 1, 2}, {1, 1, 1}}});
    for (int n = 0; n < 100; ++n) {
        const Mat a = random_psd(gen, 2), b = random_psd(gen, 2);
        const double h = 1e-5;
        const Mat fd = symmetrize((xi_grad(xi, a + h * b) - xi_grad(xi, a - h * b)) / (2 * h));
        const Mat d = xi_dirderiv(xi, a, b);
        CHECK((fd - d).norm() <= 1e-7 * std::max(1.0, d.norm()));
    }
}

TEST_CASE("gradient increments are PSD for the coupled model") {
    std::mt19937_64 gen(10);
    for (int n = 0; n < 200; ++n) {
        const Mat a = random_psd(gen, 2), b = random_psd(gen, 2);
        CHECK(is_psd(xi_grad_sym(fully_coupled(), a + b) - xi_grad_sym(fully_coupled(), a), 1e-9));
    }
}

TEST_CASE("spin measures") {
    const SpinMeasure m = SpinMeasure::ising(0.7);
    CHECK(m.mass() == doctest::Approx(1.0));
    CHECK(m.max_norm() == 1.0);
    CHECK(SpinMeasure::ising(0.5, 2.0).normalized().mass() == doctest::Approx(1.0));
    CHECK(SpinMeasure::ising_product(2).atoms.size() == 4);
    SpinMeasure bad;
    bad.dim = 1;
    CHECK_THROWS(bad.validate());
}
