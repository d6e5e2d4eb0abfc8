#include "parisi/paths.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace parisi {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

// Index k of the piece [b[k], b[k+1]) containing s.
std::size_t right_piece(const std::vector<double>& b, double s) {
    auto it = std::upper_bound(b.begin(), b.end(), s);
    return it == b.begin() ? 0 : static_cast<std::size_t>(it - b.begin()) - 1;
}

}  // namespace

StepPath StepPath::constant(const Mat& v) {
    StepPath q;
    q.dim = static_cast<int>(v.rows());
    q.breakpoints = {0.0};
    q.values = {v};
    return q;
}

StepPath StepPath::zero(int dim) { return constant(Mat::Zero(dim, dim)); }

void StepPath::validate(double tol) const {
    if (dim < 1) fail("StepPath: dim must be >= 1");
    if (breakpoints.empty() || breakpoints.size() != values.size())
        fail("StepPath: breakpoints and values must be nonempty and of equal length");
    if (breakpoints.front() != 0.0) fail("StepPath: first breakpoint must be 0");
    for (std::size_t k = 0; k < breakpoints.size(); ++k) {
        if (!(breakpoints[k] < 1.0)) fail("StepPath: breakpoints must lie in [0,1)");
        if (k > 0 && !(breakpoints[k] > breakpoints[k - 1]))
            fail("StepPath: breakpoints must be strictly increasing");
        const Mat& v = values[k];
        if (v.rows() != dim || v.cols() != dim) fail("StepPath: value " + std::to_string(k) + " has wrong shape");
        if (!is_symmetric(v)) fail("StepPath: value " + std::to_string(k) + " is not symmetric");
        if (min_eigenvalue(v) < -tol) fail("StepPath: value " + std::to_string(k) + " is not PSD");
        if (k > 0 && !loewner_leq(values[k - 1], v, tol))
            fail("StepPath: values not Loewner-increasing at index " + std::to_string(k));
    }
}

bool StepPath::is_zero() const {
    for (const Mat& v : values)
        if (v.cwiseAbs().maxCoeff() != 0.0) return false;
    return true;
}

Mat eval_path(const StepPath& q, double s, Side side) {
    if (!(s >= 0.0 && s <= 1.0)) fail("eval_path: s outside [0,1]");
    if (side == Side::Right) {
        if (s == 1.0) return q.values.back();
        return q.values[right_piece(q.breakpoints, s)];
    }
    if (s == 0.0) return Mat::Zero(q.dim, q.dim);
    // value v_k on (s_k, s_{k+1}]
    auto it = std::lower_bound(q.breakpoints.begin(), q.breakpoints.end(), s);
    return q.values[static_cast<std::size_t>(it - q.breakpoints.begin()) - 1];
}

std::vector<double> merged_breakpoints(const StepPath& a, const StepPath& b) {
    std::vector<double> g = a.breakpoints;
    g.insert(g.end(), b.breakpoints.begin(), b.breakpoints.end());
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

StepPath refine(const StepPath& q, const std::vector<double>& grid) {
    StepPath r;
    r.dim = q.dim;
    r.breakpoints = grid;
    for (double s : grid) r.values.push_back(eval_path(q, s));
    return r;
}

StepPath merge_equal(const StepPath& q, double tol) {
    StepPath r;
    r.dim = q.dim;
    for (std::size_t k = 0; k < q.values.size(); ++k) {
        if (k > 0 && frob(q.values[k] - r.values.back()) <= tol) continue;
        r.breakpoints.push_back(q.breakpoints[k]);
        r.values.push_back(q.values[k]);
    }
    return r;
}

double path_distance(const StepPath& q, const StepPath& q2, Norm norm) {
    if (q.dim != q2.dim) fail("path_distance: dimension mismatch");
    switch (norm) {
        case Norm::L1:
            return integrate_pair(q, q2, [](const Mat& a, const Mat& b) { return frob(a - b); });
        case Norm::L2:
            return std::sqrt(integrate_pair(q, q2, [](const Mat& a, const Mat& b) { return (a - b).squaredNorm(); }));
        case Norm::Sup: {
            double m = 0.0;
            for (double s : merged_breakpoints(q, q2)) m = std::max(m, frob(eval_path(q, s) - eval_path(q2, s)));
            return m;
        }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

int Pdf::piece(double x) const {
    auto it = std::upper_bound(t.begin(), t.end(), x);
    int l = it == t.begin() ? 0 : static_cast<int>(it - t.begin()) - 1;
    return l;
}

double Pdf::operator()(double x) const { return level[static_cast<std::size_t>(piece(x))]; }

void Pdf::validate() const {
    if (t.empty() || t.size() != level.size()) fail("Pdf: t and level must be nonempty and of equal length");
    if (t.front() != 0.0) fail("Pdf: t[0] must be 0");
    for (std::size_t l = 0; l < t.size(); ++l) {
        if (l > 0 && !(t[l] > t[l - 1])) fail("Pdf: breakpoints must be strictly increasing");
        if (l > 0 && !(level[l] > level[l - 1])) fail("Pdf: levels must be strictly increasing");
        if (!(level[l] >= 0.0 && level[l] <= 1.0)) fail("Pdf: levels must lie in [0,1]");
    }
    if (level.back() != 1.0) fail("Pdf: alpha(T) must equal 1");
    if (t.back() > domain_end) fail("Pdf: breakpoints must not exceed T");
}

double QuantileStep::operator()(double s) const {
    if (s <= 0.0) return 0.0;
    auto it = std::lower_bound(u.begin(), u.end(), s);
    std::size_t i = static_cast<std::size_t>(it - u.begin());
    return c[std::min(i, c.size()) - 1];
}

double QuantileStep::right(double s) const {
    if (s >= 1.0) return c.back();
    return c[std::min(right_piece(u, s), c.size() - 1)];
}

double quantile_inverse(const Pdf& alpha, double s) {
    if (s <= 0.0) return 0.0;
    for (std::size_t l = 0; l < alpha.level.size(); ++l)
        if (alpha.level[l] >= s) return alpha.t[l];
    return alpha.t.back();
}

double quantile_inverse_right(const Pdf& alpha, double s) {
    for (std::size_t l = 0; l < alpha.level.size(); ++l)
        if (alpha.level[l] > s) return alpha.t[l];
    return alpha.t.back();
}

QuantileStep quantile_of(const Pdf& alpha) {
    QuantileStep q;
    q.u.push_back(0.0);
    for (std::size_t l = 0; l < alpha.level.size(); ++l) {
        if (alpha.level[l] <= 0.0) continue;
        q.u.push_back(alpha.level[l]);
        q.c.push_back(alpha.t[l]);
    }
    return q;
}

Pdf pdf_from_quantile(const QuantileStep& q) {
    if (q.u.size() < 2 || q.c.size() + 1 != q.u.size()) fail("pdf_from_quantile: malformed step function");
    if (q.u.front() != 0.0 || q.u.back() != 1.0) fail("pdf_from_quantile: domain must be [0,1]");
    for (std::size_t i = 0; i < q.c.size(); ++i) {
        if (!(q.u[i + 1] > q.u[i])) fail("pdf_from_quantile: breakpoints must increase");
        if (q.c[i] < 0.0 || (i > 0 && q.c[i] < q.c[i - 1])) fail("pdf_from_quantile: non-monotone input");
    }
    Pdf a;
    if (q.c.front() > 0.0) {
        a.t.push_back(0.0);
        a.level.push_back(0.0);
    }
    for (std::size_t i = 0; i < q.c.size(); ++i) {
        // alpha equals u[i+1] from c[i] until the next distinct value
        if (i + 1 < q.c.size() && q.c[i + 1] == q.c[i]) continue;
        a.t.push_back(q.c[i]);
        a.level.push_back(q.u[i + 1]);
    }
    a.domain_end = a.t.back();
    return a;
}

std::vector<double> support_of_dalpha(const Pdf& alpha) {
    std::vector<double> s;
    if (alpha.level.front() > 0.0) s.push_back(0.0);
    for (std::size_t l = 1; l < alpha.t.size(); ++l) s.push_back(alpha.t[l]);
    return s;
}

std::vector<double> dalpha_masses(const Pdf& alpha) {
    std::vector<double> m;
    if (alpha.level.front() > 0.0) m.push_back(alpha.level.front());
    for (std::size_t l = 1; l < alpha.t.size(); ++l) m.push_back(alpha.level[l] - alpha.level[l - 1]);
    return m;
}

// ---------------------------------------------------------------------------

Mat LipschitzPath::operator()(double t) const {
    if (t <= knots.front()) return values.front();
    if (t >= knots.back()) return values.back();
    std::size_t i = right_piece(knots, t);
    const double w = (t - knots[i]) / (knots[i + 1] - knots[i]);
    return (1.0 - w) * values[i] + w * values[i + 1];
}

Mat LipschitzPath::slope(double t) const {
    std::size_t i = right_piece(knots, t);
    if (t < knots.front() || i + 1 >= knots.size()) return Mat::Zero(dim(), dim());
    return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
}

double LipschitzPath::lipschitz() const {
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < knots.size(); ++i)
        m = std::max(m, frob(values[i + 1] - values[i]) / (knots[i + 1] - knots[i]));
    return m;
}

bool LipschitzPath::increasing(double tol) const {
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
        if (!loewner_leq(values[i], values[i + 1], tol)) return false;
    return true;
}

Decomposition canonical_decomposition(const StepPath& q) {
    q.validate();
    StepPath m = merge_equal(q);
    Decomposition d;
    d.pinned = true;
    const int D = m.dim;
    if (m.values.size() == 1 && m.values.front().trace() <= 0.0) {
        d.empty = true;
        d.alpha.t = {0.0};
        d.alpha.level = {1.0};
        d.alpha.domain_end = 0.0;
        d.L.knots = {0.0};
        d.L.values = {Mat::Zero(D, D)};
        return d;
    }
    const std::size_t K = m.values.size() - 1;
    std::vector<double> tau(K + 1);
    for (std::size_t k = 0; k <= K; ++k) tau[k] = m.values[k].trace();
    const bool start_zero = tau[0] <= 0.0;

    // alpha = 0 on [0, tau_0), s_k on [tau_{k-1}, tau_k), 1 at tau_K
    if (!start_zero) {
        d.alpha.t.push_back(0.0);
        d.alpha.level.push_back(0.0);
        d.alpha.t.push_back(tau[0]);
    } else {
        d.alpha.t.push_back(0.0);
    }
    for (std::size_t k = 1; k <= K; ++k) {
        d.alpha.level.push_back(m.breakpoints[k]);
        d.alpha.t.push_back(tau[k]);
    }
    d.alpha.level.push_back(1.0);
    d.alpha.domain_end = tau[K];

    d.L.knots.push_back(0.0);
    d.L.values.push_back(Mat::Zero(D, D));
    for (std::size_t k = start_zero ? 1 : 0; k <= K; ++k) {
        d.L.knots.push_back(tau[k]);
        d.L.values.push_back(m.values[k]);
    }
    return d;
}

StepPath block_diagonal(const std::vector<StepPath>& paths) {
    if (paths.empty()) fail("block_diagonal: no paths");
    std::vector<double> grid;
    int total = 0;
    for (const StepPath& p : paths) {
        grid.insert(grid.end(), p.breakpoints.begin(), p.breakpoints.end());
        total += p.dim;
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    StepPath b;
    b.dim = total;
    b.breakpoints = grid;
    for (double s : grid) {
        Mat v = Mat::Zero(total, total);
        int off = 0;
        for (const StepPath& p : paths) {
            v.block(off, off, p.dim, p.dim) = eval_path(p, s);
            off += p.dim;
        }
        b.values.push_back(v);
    }
    return b;
}

JointDecomposition joint_canonical_decomposition(const std::vector<StepPath>& paths) {
    Decomposition d = canonical_decomposition(block_diagonal(paths));
    JointDecomposition j;
    j.alpha = d.alpha;
    j.empty = d.empty;
    int off = 0;
    for (const StepPath& p : paths) {
        LipschitzPath lk;
        lk.knots = d.L.knots;
        for (const Mat& v : d.L.values) lk.values.push_back(v.block(off, off, p.dim, p.dim));
        j.L.push_back(std::move(lk));
        off += p.dim;
    }
    return j;
}

double decomposition_residual(const StepPath& q, const Decomposition& d, const std::vector<double>& s) {
    double r = 0.0;
    for (double x : s) {
        if (!(x > 0.0 && x <= 1.0)) fail("decomposition_residual: s must lie in (0,1]");
        const Mat lhs = eval_path(q, x, Side::Left);
        const Mat rhs = d.empty ? Mat::Zero(q.dim, q.dim) : d.L(quantile_inverse(d.alpha, x));
        r = std::max(r, frob(lhs - rhs));
    }
    return r;
}

}  // namespace parisi
