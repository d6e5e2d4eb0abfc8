#pragma once

#include <string>
#include <vector>

#include "parisi/psd.hpp"

namespace parisi {

/// Right-continuous increasing step path on [0,1): value values[k] on
/// [breakpoints[k], breakpoints[k+1]) and values.back() on [breakpoints.back(), 1].
struct StepPath {
    int dim = 1;
    std::vector<double> breakpoints;  // starts at 0, strictly increasing, < 1
    std::vector<Mat> values;

    static StepPath constant(const Mat& v);
    static StepPath zero(int dim);

    int levels() const { return static_cast<int>(values.size()); }
    /// Throws std::invalid_argument describing the first violated invariant.
    void validate(double tol = kPsdTol) const;
    bool is_zero() const;
};

enum class Side { Left, Right };

/// q(s) for side Right (q(1) at s = 1); the left-continuous version for side Left,
/// which is 0 at s = 0.
Mat eval_path(const StepPath& q, double s, Side side = Side::Right);

/// Piecewise-constant path on the union of both breakpoint sets.
std::vector<double> merged_breakpoints(const StepPath& a, const StepPath& b);
/// Restate q on a finer breakpoint grid (grid must contain q's breakpoints' coverage).
StepPath refine(const StepPath& q, const std::vector<double>& grid);
/// Drop breakpoints across which the value does not change.
StepPath merge_equal(const StepPath& q, double tol = 1e-12);

enum class Norm { L1, L2, Sup };
/// L1 and Sup are exact; L2 returns the square root of the exact integral of |q-q2|^2.
double path_distance(const StepPath& q, const StepPath& q2, Norm norm);

/// Integral over [0,1] of f(q(s), q2(s)) for step paths, exact on merged pieces.
template <class F>
double integrate_pair(const StepPath& q, const StepPath& q2, F f) {
    auto grid = merged_breakpoints(q, q2);
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double hi = i + 1 < grid.size() ? grid[i + 1] : 1.0;
        acc += (hi - grid[i]) * f(eval_path(q, grid[i]), eval_path(q2, grid[i]));
    }
    return acc;
}

/// Step probability distribution function on [0,T]: alpha = level[l] on [t[l], t[l+1]),
/// with level.back() = 1 from t.back() <= T on.
struct Pdf {
    std::vector<double> t;      // t[0] = 0 < t[1] < ...
    std::vector<double> level;  // strictly increasing, last = 1
    double domain_end = 0.0;    // T

    double T() const { return domain_end; }
    double operator()(double x) const;
    /// Index l with x in [t[l], t[l+1]); the last index for x >= T.
    int piece(double x) const;
    void validate() const;
};

/// Increasing left-continuous step function on [0,1] with value c[i] on (u[i], u[i+1]]
/// and 0 at 0.
struct QuantileStep {
    std::vector<double> u;  // 0 = u[0] < ... < u.back() = 1
    std::vector<double> c;  // size u.size() - 1, nondecreasing, >= 0

    double operator()(double s) const;
    /// Right limit at s.
    double right(double s) const;
};

double quantile_inverse(const Pdf& alpha, double s);
/// Right limit alpha^{-1}(s+).
double quantile_inverse_right(const Pdf& alpha, double s);
QuantileStep quantile_of(const Pdf& alpha);
Pdf pdf_from_quantile(const QuantileStep& q);
std::vector<double> support_of_dalpha(const Pdf& alpha);
/// Masses of d alpha at the support points (same order as support_of_dalpha).
std::vector<double> dalpha_masses(const Pdf& alpha);

/// Piecewise-linear increasing path through knots; constant after the last knot.
struct LipschitzPath {
    std::vector<double> knots;  // 0 = knots[0] < ...
    std::vector<Mat> values;

    int dim() const { return values.empty() ? 0 : static_cast<int>(values.front().rows()); }
    double T() const { return knots.back(); }
    Mat operator()(double t) const;
    /// Derivative on the linear piece containing [t, t+); zero past the last knot.
    Mat slope(double t) const;
    double lipschitz() const;
    bool increasing(double tol = kPsdTol) const;
};

struct Decomposition {
    LipschitzPath L;
    Pdf alpha;
    bool pinned = false;
    bool empty = false;  // decomposition of the zero path, T = 0

    double T() const { return empty ? 0.0 : alpha.T(); }
};

/// Canonical (pinned) decomposition: alpha^{-1} = tr q-> and tr L(t) = t.
Decomposition canonical_decomposition(const StepPath& q);

struct JointDecomposition {
    std::vector<LipschitzPath> L;
    Pdf alpha;
    bool empty = false;
};
/// Joint canonical decomposition with alpha^{-1} = sum_k tr q_k->.
JointDecomposition joint_canonical_decomposition(const std::vector<StepPath>& paths);

/// Block-diagonal path diag(q_1, ..., q_n) on merged breakpoints.
StepPath block_diagonal(const std::vector<StepPath>& paths);

/// Largest residual |q->(s) - L(alpha^{-1}(s))| over the given s values.
double decomposition_residual(const StepPath& q, const Decomposition& d, const std::vector<double>& s);

}  // namespace parisi
