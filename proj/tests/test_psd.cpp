#include <random>

#include "doctest.h"
#include "parisi/psd.hpp"

using namespace parisi;

namespace {

Mat diag2(double a, double b) {
    Mat m = Mat::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

Mat random_psd(std::mt19937_64& gen, int D) {
    std::normal_distribution<double> nd;
    Mat g(D, D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
    return g * g.transpose();
}

}  // namespace

TEST_CASE("loewner_leq examples") {
    const Mat I = Mat::Identity(2, 2);
    CHECK(loewner_leq(Mat::Zero(2, 2), I, 1e-10));
    CHECK(loewner_leq(I, I, 1e-10));
    CHECK_FALSE(loewner_leq(diag2(1, 0), diag2(0, 1), 1e-10));
    CHECK_THROWS(loewner_leq(I, Mat::Identity(3, 3), 1e-10));
}

TEST_CASE("sqrt_psd examples") {
    CHECK((sqrt_psd(Mat::Identity(2, 2)) - Mat::Identity(2, 2)).norm() < 1e-14);
    CHECK((sqrt_psd(diag2(4, 9)) - diag2(2, 3)).norm() < 1e-14);
    CHECK(sqrt_psd(Mat::Zero(2, 2)).norm() == 0.0);
    CHECK_THROWS(sqrt_psd(diag2(1, -1)));
}

TEST_CASE("project_psd examples") {
    CHECK((project_psd(diag2(1, -1)) - diag2(1, 0)).norm() < 1e-14);
    CHECK(project_psd(-Mat::Identity(2, 2)).norm() < 1e-14);
    const Mat a = diag2(2, 0.5);
    CHECK((project_psd(a) - a).norm() < 1e-14);
}

TEST_CASE("sym_eig orders eigenvalues descending") {
    const SymEig e = sym_eig(diag2(1, 3));
    CHECK(e.values(0) == doctest::Approx(3.0));
    CHECK(e.values(1) == doctest::Approx(1.0));
}

TEST_CASE("trace and Frobenius norm are comparable on the cone") {
    std::mt19937_64 gen(1);
    for (int n = 0; n < 500; ++n) {
        const int D = 1 + n % 4;
        const Mat a = random_psd(gen, D);
        const double tr = a.trace(), sd = std::sqrt(static_cast<double>(D));
        CHECK(tr / sd <= frob(a) * (1 + 1e-12));
        CHECK(frob(a) <= sd * tr * (1 + 1e-12));
    }
}

TEST_CASE("sqrt_psd squares back on random matrices") {
    std::mt19937_64 gen(2);
    for (int n = 0; n < 1000; ++n) {
        const int D = 1 + n % 4;
        const Mat a = random_psd(gen, D);
        const Mat r = sqrt_psd(a);
        CHECK((r * r - a).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(is_psd(r));
    }
}

TEST_CASE("project_psd is idempotent and lands in the cone") {
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nd;
    for (int n = 0; n < 300; ++n) {
        const int D = 1 + n % 4;
        Mat g(D, D);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
        const Mat p = project_psd(symmetrize(g));
        CHECK(loewner_leq(Mat::Zero(D, D), p, kPsdTol));
        CHECK((project_psd(p) - p).norm() < 1e-12);
    }
}
