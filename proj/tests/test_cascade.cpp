#include <cmath>
#include <functional>

#include "doctest.h"
#include "parisi/cascade.hpp"
#include "parisi/parisi_pde.hpp"
#include "parisi/paths.hpp"

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

double within(const GibbsEstimate& e, double target, int i = 0) {
    return std::abs(e.mean.at(i) - target) / std::max(e.se.at(i), 1e-300);
}

}  // namespace

TEST_CASE("constant path gives a single leaf") {
    const CascadeSample c = sample_cascade(StepPath::constant(m1(0.3)), CascadeOptions{}, 1);
    CHECK(c.depth == 0);
    CHECK(c.leaves().size() == 1);
    CHECK(c.leaf_weights().front() == doctest::Approx(1.0));
}

TEST_CASE("one-level weights have the Poisson-Dirichlet second moment") {
    const StepPath q = scalar({0.0, 0.5}, {0.0, 0.3});
    CascadeOptions opt;
    opt.tail_tol = 0.0;
    opt.leaf_tail_tol = 0.0;
    const int n = 400;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < n; ++r) {
        const CascadeSample c = sample_cascade(q, opt, 77, static_cast<std::uint64_t>(r));
        CHECK(c.depth == 1);
        double tot = 0.0, s2 = 0.0;
        for (double w : c.leaf_weights()) {
            tot += w;
            s2 += w * w;
        }
        CHECK(tot == doctest::Approx(1.0).epsilon(1e-12));
        sum += s2;
        sum2 += s2 * s2;
    }
    const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / (n - 1));
    CHECK(std::abs(mean - 0.5) <= 3 * se + 2e-3);
}

TEST_CASE("mc_f_mu examples") {
    const SpinMeasure mu = SpinMeasure::ising();
    const GibbsEstimate zero = mc_f_mu(mu, StepPath::zero(1), Vec::Zero(1), Mat::Zero(1, 1), 20, {}, 1);
    CHECK(std::abs(zero.value()) < 1e-12);

    const double h = 0.3, x = 0.4;
    const GibbsEstimate e = mc_f_mu(mu, StepPath::constant(m1(h)), Vec::Constant(1, x), m1(h), 2000, {}, 2);
    const double oracle = gauss_expect([&](double g) { return std::log(std::cosh(std::sqrt(2.0 * h) * g + x)); });
    CHECK(within(e, oracle) <= 3.0);
}

TEST_CASE("mc_psi agrees with the PDE on a two-level path") {
    const SpinMeasure mu = SpinMeasure::ising(0.6);
    const StepPath q = scalar({0.0, 0.5}, {0.02, 0.06});
    const GibbsEstimate e = mc_psi(mu, q, 200, {}, 3);
    CHECK(within(e, psi_value(mu, q)) <= 3.0);
    CHECK(mc_psi(mu, StepPath::zero(1), 10, {}, 3).value() == doctest::Approx(0.0));
}

TEST_CASE("Lipschitz bound on f_mu") {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath q = scalar({0.0, 0.5}, {0.02, 0.05});
    const StepPath q2 = scalar({0.0, 0.3}, {0.03, 0.06});
    const GibbsEstimate a = mc_f_mu(mu, q, Vec::Constant(1, 0.2), m1(0.0), 200, {}, 4);
    const GibbsEstimate b = mc_f_mu(mu, q2, Vec::Constant(1, 0.5), m1(0.1), 200, {}, 5);
    const double bound = 0.1 + path_distance(q, q2, Norm::L1) + 0.3 + 3 * (a.error() + b.error());
    CHECK(std::abs(a.value() - b.value()) <= bound);
}

TEST_CASE("Gibbs averages: normalization, symmetry and overlap invariance") {
    const SpinMeasure mu = SpinMeasure::ising();
    const StepPath q = scalar({0.0, 0.4}, {0.02, 0.06});
    Observable one;
    one.f = [](const std::vector<const Vec*>&, const std::vector<int>&, double* out) { out[0] = 1.0; };
    const GibbsEstimate n = mc_gibbs(mu, q, Vec::Zero(1), Mat::Zero(1, 1), one, 50, {}, 6, 1);
    CHECK(n.value() == doctest::Approx(1.0).epsilon(1e-12));

    Observable sigma;
    sigma.f = [](const std::vector<const Vec*>& s, const std::vector<int>&, double* out) { out[0] = (*s[0])(0); };
    CHECK(within(mc_gibbs(mu, q, Vec::Zero(1), Mat::Zero(1, 1), sigma, 200, {}, 7, 1), 0.0) <= 3.0);

    // overlap depth of two replicas is uniform on the levels after any bounded tilt
    Observable depth;
    depth.replicas = 2;
    depth.components = 2;
    depth.f = [](const std::vector<const Vec*>&, const std::vector<int>& d, double* out) {
        out[0] = d[1] == 0 ? 1.0 : 0.0;
        out[1] = d[1] >= 1 ? 1.0 : 0.0;
    };
    const LeafTilt tilt = [](const Vec& w) { return std::tanh(w(0)); };
    const GibbsEstimate e =
        mc_gibbs_tilted(mu, q, Vec::Constant(1, 0.3), Mat::Zero(1, 1), tilt, depth, 300, {}, 8, 1);
    CHECK(within(e, 0.4, 0) <= 3.0);
    CHECK(within(e, 0.6, 1) <= 3.0);
}

TEST_CASE("estimates are reproducible") {
    const StepPath q = scalar({0.0, 0.4}, {0.02, 0.06});
    const GibbsEstimate a = mc_psi(SpinMeasure::ising(), q, 30, {}, 9);
    const GibbsEstimate b = mc_psi(SpinMeasure::ising(), q, 30, {}, 9);
    CHECK(a.mean == b.mean);
    CHECK(a.se == b.se);
}
