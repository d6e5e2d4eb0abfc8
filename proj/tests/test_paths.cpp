#include <random>

#include "doctest.h"
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

Pdf pdf(std::vector<double> t, std::vector<double> level, double T) {
    Pdf a;
    a.t = std::move(t);
    a.level = std::move(level);
    a.domain_end = T;
    return a;
}

StepPath random_path(std::mt19937_64& gen, int D, int K) {
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::normal_distribution<double> nd;
    StepPath q;
    q.dim = D;
    std::vector<double> bp{0.0};
    for (int k = 1; k < K; ++k) bp.push_back(ud(gen));
    std::sort(bp.begin(), bp.end());
    Mat run = Mat::Zero(D, D);
    for (double b : bp) {
        if (!q.breakpoints.empty() && b < q.breakpoints.back() + 1e-3) continue;
        q.breakpoints.push_back(b);
        Mat g(D, D);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
        if (ud(gen) > 0.2) run += g * g.transpose() / D;
        q.values.push_back(run);
    }
    if (q.values.back().trace() == 0.0) q.values.back() += Mat::Identity(D, D);
    return q;
}

}  // namespace

TEST_CASE("eval_path examples") {
    const StepPath q = StepPath::constant(m1(0.4));
    CHECK(eval_path(q, 0.0, Side::Left)(0, 0) == 0.0);
    CHECK(eval_path(q, 0.5, Side::Right)(0, 0) == 0.4);
    CHECK(eval_path(q, 1.0, Side::Right)(0, 0) == 0.4);
    CHECK_THROWS(eval_path(q, 1.5, Side::Right));
}

TEST_CASE("StepPath validation rejects decreasing values") {
    CHECK_THROWS(scalar({0.0, 0.5}, {0.6, 0.2}).validate());
    CHECK_THROWS(scalar({0.0, 0.5, 0.5}, {0.1, 0.2, 0.3}).validate());
    CHECK_NOTHROW(scalar({0.0, 0.5}, {0.2, 0.6}).validate());
}

TEST_CASE("quantile_inverse examples") {
    const Pdf a = pdf({0.0, 0.5}, {0.3, 1.0}, 1.0);
    CHECK(quantile_inverse(a, 0.2) == 0.0);
    CHECK(quantile_inverse(a, 0.8) == 0.5);
    CHECK(quantile_inverse(a, 0.0) == 0.0);
}

TEST_CASE("pdf_from_quantile and support examples") {
    QuantileStep c1;
    c1.u = {0.0, 1.0};
    c1.c = {0.4};
    const Pdf a1 = pdf_from_quantile(c1);
    CHECK(a1(0.2) == 0.0);
    CHECK(a1(0.4) == 1.0);
    CHECK(support_of_dalpha(a1) == std::vector<double>{0.4});

    QuantileStep c2;
    c2.u = {0.0, 0.5, 1.0};
    c2.c = {0.2, 0.6};
    const Pdf a2 = pdf_from_quantile(c2);
    CHECK(a2(0.1) == 0.0);
    CHECK(a2(0.2) == 0.5);
    CHECK(a2(0.5) == 0.5);
    CHECK(a2(0.6) == 1.0);
    CHECK(support_of_dalpha(a2) == std::vector<double>{0.2, 0.6});

    const Pdf one = pdf({0.0}, {1.0}, 0.7);
    CHECK(support_of_dalpha(one) == std::vector<double>{0.0});
}

TEST_CASE("canonical decomposition examples") {
    SUBCASE("D=1 constant") {
        const Decomposition d = canonical_decomposition(StepPath::constant(m1(0.2)));
        CHECK(d.T() == doctest::Approx(0.2));
        CHECK(quantile_inverse(d.alpha, 0.5) == doctest::Approx(0.2));
        CHECK(support_of_dalpha(d.alpha).size() == 1);
        CHECK(d.L(0.1)(0, 0) == doctest::Approx(0.1));
        CHECK(d.pinned);
    }
    SUBCASE("D=2 constant diagonal") {
        Mat v = Mat::Zero(2, 2);
        v(0, 0) = 0.1;
        v(1, 1) = 0.3;
        const Decomposition d = canonical_decomposition(StepPath::constant(v));
        CHECK(d.T() == doctest::Approx(0.4));
        CHECK(d.L(0.2)(0, 0) == doctest::Approx(0.05));
        CHECK(d.L(0.2)(1, 1) == doctest::Approx(0.15));
        CHECK(d.alpha(0.39) == 0.0);
        CHECK(d.alpha(0.4) == 1.0);
    }
    SUBCASE("D=1 two levels") {
        const Decomposition d = canonical_decomposition(scalar({0.0, 0.5}, {0.2, 0.6}));
        CHECK(d.alpha(0.1) == 0.0);
        CHECK(d.alpha(0.3) == 0.5);
        CHECK(d.alpha(0.6) == 1.0);
        CHECK(d.L(0.45)(0, 0) == doctest::Approx(0.45));
    }
    SUBCASE("zero path") {
        CHECK(canonical_decomposition(StepPath::zero(2)).empty);
    }
}

TEST_CASE("joint decomposition examples") {
    SUBCASE("identical copies") {
        const StepPath q = scalar({0.0, 0.5}, {0.2, 0.6});
        const JointDecomposition j = joint_canonical_decomposition({q, q});
        CHECK(quantile_inverse(j.alpha, 0.7) == doctest::Approx(1.2));
        CHECK(j.L[0](0.8)(0, 0) == doctest::Approx(0.4));
        CHECK(j.L[1](0.8)(0, 0) == doctest::Approx(0.4));
    }
    SUBCASE("p = 0.1, q = 0.3") {
        const JointDecomposition j =
            joint_canonical_decomposition({StepPath::constant(m1(0.1)), StepPath::constant(m1(0.3))});
        CHECK(j.alpha.T() == doctest::Approx(0.4));
        const auto supp = support_of_dalpha(j.alpha);
        REQUIRE(supp.size() == 1);
        CHECK(supp[0] == doctest::Approx(0.4));
        CHECK(j.L[0](0.4)(0, 0) == doctest::Approx(0.1));
        CHECK(j.L[1](0.2)(0, 0) == doctest::Approx(0.15));
    }
    SUBCASE("zero and nonzero") {
        const JointDecomposition j =
            joint_canonical_decomposition({StepPath::zero(1), StepPath::constant(m1(0.3))});
        CHECK(j.alpha.T() == doctest::Approx(0.3));
        CHECK(j.L[0](0.3)(0, 0) == 0.0);
    }
    CHECK(joint_canonical_decomposition({StepPath::zero(1), StepPath::zero(1)}).empty);
}

TEST_CASE("path_distance examples") {
    const StepPath a = scalar({0.0, 0.5}, {0.2, 0.6});
    CHECK(path_distance(a, a, Norm::L1) == 0.0);
    CHECK(path_distance(StepPath::zero(1), StepPath::constant(m1(1.0)), Norm::L1) == doctest::Approx(1.0));
    CHECK(path_distance(StepPath::constant(m1(0.2)), a, Norm::L1) == doctest::Approx(0.2));
}

TEST_CASE("quantile round trips and Galois inequalities") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int n = 0; n < 300; ++n) {
        const StepPath q = random_path(gen, 1 + n % 3, 1 + n % 6);
        const Decomposition d = canonical_decomposition(q);
        if (d.empty) continue;
        const Pdf& a = d.alpha;
        const Pdf back = pdf_from_quantile(quantile_of(a));
        for (int i = 0; i <= 50; ++i) {
            const double t = a.T() * i / 50.0;
            CHECK(quantile_inverse(a, a(t)) <= t + 1e-15);
            CHECK(back(t) == a(t));
            const double s = i / 50.0;
            CHECK(s <= a(quantile_inverse(a, s)) + 1e-15);
        }
        const QuantileStep qs = quantile_of(a);
        const QuantileStep qs2 = quantile_of(pdf_from_quantile(qs));
        CHECK(qs.u == qs2.u);
        CHECK(qs.c == qs2.c);
    }
}

TEST_CASE("canonical decomposition reproduces q on random paths") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (int n = 0; n < 500; ++n) {
        const int D = 1 + n % 3;
        const StepPath q = random_path(gen, D, 1 + n % 6);
        const Decomposition d = canonical_decomposition(q);
        if (d.empty) continue;
        std::vector<double> s;
        for (int i = 0; i < 100; ++i) s.push_back(1e-9 + (1 - 1e-9) * ud(gen));
        s.push_back(1.0);
        CHECK(decomposition_residual(q, d, s) <= 1e-12);
        for (int i = 0; i <= 10; ++i) {
            const double t = d.T() * i / 10.0;
            CHECK(std::abs(d.L(t).trace() - t) <= 1e-12);
        }
        CHECK(d.L.lipschitz() <= std::sqrt(static_cast<double>(D)) + 1e-12);
        CHECK(d.L.increasing());
    }
}

TEST_CASE("jump duality by enumeration") {
    std::mt19937_64 gen(13);
    for (int n = 0; n < 200; ++n) {
        const StepPath q = random_path(gen, 1, 1 + n % 5);
        const Decomposition d = canonical_decomposition(q);
        if (d.empty) continue;
        const auto supp = support_of_dalpha(d.alpha);
        std::vector<double> pts{0.0};
        pts.insert(pts.end(), supp.begin(), supp.end());
        std::vector<double> s_test{0.0, 0.25, 0.5, 0.75};
        s_test.insert(s_test.end(), d.alpha.level.begin(), d.alpha.level.end());
        for (double s : s_test) {
            if (s >= 1.0) continue;
            const bool jump = quantile_inverse_right(d.alpha, s) > quantile_inverse(d.alpha, s);
            bool witness = false;
            for (double t : pts)
                for (double ts : pts) {
                    if (!(t < ts) || d.alpha(t) != s) continue;
                    bool gap = true;
                    for (double x : supp) gap = gap && !(x > t && x < ts);
                    witness = witness || gap;
                }
            CHECK(jump == witness);
        }
    }
}

TEST_CASE("law of the quantile function under uniform draws") {
    const Pdf a = pdf({0.0, 0.2, 0.6}, {0.1, 0.5, 1.0}, 0.9);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const int n = 100000;
    std::vector<double> draws(n);
    for (double& x : draws) x = quantile_inverse(a, ud(gen));
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (double t : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8}) {
        const double emp =
            static_cast<double>(std::upper_bound(draws.begin(), draws.end(), t) - draws.begin()) / n;
        ks = std::max(ks, std::abs(emp - a(t)));
    }
    CHECK(ks < 1.63 / std::sqrt(static_cast<double>(n)));
}
