#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "parisi/psd.hpp"

namespace parisi {

/// Finite positive measure on atoms in R^D (total mass need not be 1).
struct SpinMeasure {
    int dim = 1;
    std::vector<Vec> atoms;
    std::vector<double> weights;

    static SpinMeasure ising(double p_plus = 0.5, double mass = 1.0);
    /// Product of D independent symmetric +-1 spins.
    static SpinMeasure ising_product(int dim);
    static SpinMeasure dirac(const Vec& x);

    void validate() const;
    double mass() const;
    double max_norm() const;
    SpinMeasure normalized() const;
};

/// True iff the atoms linearly span R^D (rank tolerance 1e-10).
bool span_check(const SpinMeasure& mu);

/// One term coef * prod a_{ij}^{k} over the listed entries (0-based indices).
struct Monomial {
    double coef = 0.0;
    struct Power {
        int i, j, k;
    };
    std::vector<Power> powers;
    int degree() const;
};

/// Polynomial covariance function xi of the matrix entries, xi(0) = 0.
struct XiModel {
    int dim = 1;
    std::vector<Monomial> terms;

    void validate() const;
    static XiModel sk(double beta = 1.0);  // beta^2 a^2 in D = 1
};

double xi_eval(const XiModel& xi, const Mat& a);
/// Matrix of partial derivatives d xi / d a_ij.
Mat xi_grad(const XiModel& xi, const Mat& a);
/// Symmetric part of xi_grad; the form used on symmetric overlap paths.
Mat xi_grad_sym(const XiModel& xi, const Mat& a);
/// Symmetrized d/d eps grad xi(a + eps b) at eps = 0.
Mat xi_dirderiv(const XiModel& xi, const Mat& a, const Mat& b);

struct CouplingResult {
    bool coupled = true;
    std::optional<Mat> witness_a, witness_b;
    double min_margin = 0.0;  // smallest observed c over samples with y^T b y > 0
};

/// Sampled certificate of y-to-z coupling: for random PSD pairs (a,b) with y^T b y > 0
/// check that xi_dirderiv(a,b) >= c z z^T for some c > 0.
CouplingResult is_y_to_z_coupled(const XiModel& xi, const Vec& y, const Vec& z, int samples = 200,
                                 std::uint64_t seed = 0);

/// Largest c with m >= c z z^T (0 if none, m assumed symmetric).
double max_rank_one_below(const Mat& m, const Vec& z, double tol = 1e-12);

}  // namespace parisi
