#include "parisi/spin_models.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "parisi/rng.hpp"

namespace parisi {

SpinMeasure SpinMeasure::ising(double p_plus, double mass) {
    SpinMeasure m;
    m.dim = 1;
    m.atoms = {Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
    m.weights = {mass * (1.0 - p_plus), mass * p_plus};
    return m;
}

SpinMeasure SpinMeasure::ising_product(int dim) {
    SpinMeasure m;
    m.dim = dim;
    const int n = 1 << dim;
    for (int c = 0; c < n; ++c) {
        Vec x(dim);
        for (int d = 0; d < dim; ++d) x(d) = (c >> d) & 1 ? 1.0 : -1.0;
        m.atoms.push_back(x);
        m.weights.push_back(1.0 / n);
    }
    return m;
}

SpinMeasure SpinMeasure::dirac(const Vec& x) {
    SpinMeasure m;
    m.dim = static_cast<int>(x.size());
    m.atoms = {x};
    m.weights = {1.0};
    return m;
}

void SpinMeasure::validate() const {
    if (dim < 1) throw std::invalid_argument("SpinMeasure: dim must be >= 1");
    if (atoms.empty() || atoms.size() != weights.size())
        throw std::invalid_argument("SpinMeasure: need at least one atom and one weight per atom");
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].size() != dim) throw std::invalid_argument("SpinMeasure: atom has wrong dimension");
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw std::invalid_argument("SpinMeasure: weights must be positive");
    }
}

double SpinMeasure::mass() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
}

double SpinMeasure::max_norm() const {
    double m = 0.0;
    for (const Vec& a : atoms) m = std::max(m, a.norm());
    return m;
}

SpinMeasure SpinMeasure::normalized() const {
    SpinMeasure m = *this;
    const double z = mass();
    for (double& w : m.weights) w /= z;
    return m;
}

bool span_check(const SpinMeasure& mu) {
    Mat a(mu.dim, static_cast<Eigen::Index>(mu.atoms.size()));
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = mu.atoms[i];
    Eigen::JacobiSVD<Mat> svd(a);
    const Vec sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > 1e-10) ++rank;
    return rank == mu.dim;
}

// ---------------------------------------------------------------------------

int Monomial::degree() const {
    int d = 0;
    for (const Power& p : powers) d += p.k;
    return d;
}

void XiModel::validate() const {
    for (const Monomial& m : terms) {
        if (m.coef < 0.0) throw std::invalid_argument("XiModel: coefficients must be nonnegative");
        if (m.degree() < 1) throw std::invalid_argument("XiModel: constant terms violate xi(0) = 0");
        if (m.degree() > 6) throw std::invalid_argument("XiModel: total degree is limited to 6");
        for (const Monomial::Power& p : m.powers)
            if (p.i < 0 || p.j < 0 || p.i >= dim || p.j >= dim || p.k < 0)
                throw std::invalid_argument("XiModel: entry index out of range");
    }
}

XiModel XiModel::sk(double beta) {
    XiModel xi;
    xi.dim = 1;
    xi.terms.push_back({beta * beta, {{0, 0, 2}}});
    return xi;
}

namespace {

// Value of the monomial with the exponent of entry `skip` (if any) lowered by `drop`,
// times the falling factorial it produces.
double monomial_partial(const Monomial& m, const Mat& a, int e1, int e2) {
    // e1, e2: indices into m.powers to differentiate (-1 for none)
    double v = m.coef;
    for (int idx = 0; idx < static_cast<int>(m.powers.size()); ++idx) {
        const auto& p = m.powers[static_cast<std::size_t>(idx)];
        int k = p.k;
        double factor = 1.0;
        if (idx == e1) {
            factor *= k;
            --k;
        }
        if (idx == e2) {
            factor *= k;
            --k;
        }
        if (k < 0 || factor == 0.0) return 0.0;
        v *= factor * std::pow(a(p.i, p.j), k);
    }
    return v;
}

}  // namespace

double xi_eval(const XiModel& xi, const Mat& a) {
    double s = 0.0;
    for (const Monomial& m : xi.terms) s += monomial_partial(m, a, -1, -1);
    return s;
}

Mat xi_grad(const XiModel& xi, const Mat& a) {
    Mat g = Mat::Zero(xi.dim, xi.dim);
    for (const Monomial& m : xi.terms)
        for (int e = 0; e < static_cast<int>(m.powers.size()); ++e) {
            const auto& p = m.powers[static_cast<std::size_t>(e)];
            g(p.i, p.j) += monomial_partial(m, a, e, -1);
        }
    return g;
}

Mat xi_grad_sym(const XiModel& xi, const Mat& a) { return symmetrize(xi_grad(xi, a)); }

Mat xi_dirderiv(const XiModel& xi, const Mat& a, const Mat& b) {
    Mat g = Mat::Zero(xi.dim, xi.dim);
    for (const Monomial& m : xi.terms)
        for (int e = 0; e < static_cast<int>(m.powers.size()); ++e)
            for (int f = 0; f < static_cast<int>(m.powers.size()); ++f) {
                const auto& pe = m.powers[static_cast<std::size_t>(e)];
                const auto& pf = m.powers[static_cast<std::size_t>(f)];
                g(pe.i, pe.j) += monomial_partial(m, a, e, f) * b(pf.i, pf.j);
            }
    return symmetrize(g);
}

double max_rank_one_below(const Mat& m, const Vec& z, double tol) {
    // m >= c z z^T with c > 0 iff m is PSD and z lies in its range; the best c is 1/(z^T m^+ z).
    SymEig e = sym_eig(m);
    const double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
    if (e.values.minCoeff() < -tol * scale) return 0.0;
    double quad = 0.0;
    for (Eigen::Index i = 0; i < e.values.size(); ++i) {
        const double proj = e.vectors.col(i).dot(z);
        if (e.values(i) <= tol * scale) {
            if (std::abs(proj) > 1e-9 * z.norm()) return 0.0;
            continue;
        }
        quad += proj * proj / e.values(i);
    }
    return quad > 0.0 ? 1.0 / quad : 0.0;
}

CouplingResult is_y_to_z_coupled(const XiModel& xi, const Vec& y, const Vec& z, int samples, std::uint64_t seed) {
    if (y.norm() == 0.0 || z.norm() == 0.0) throw std::invalid_argument("is_y_to_z_coupled: y and z must be nonzero");
    CouplingResult res;
    res.min_margin = std::numeric_limits<double>::infinity();
    std::mt19937_64 gen(stream_seed(seed, 0x636f75706c65ULL));
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> rank_dist(1, xi.dim);
    const int D = xi.dim;
    auto random_psd = [&](int r) {
        Mat g(D, r);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < r; ++j) g(i, j) = nd(gen);
        return Mat(g * g.transpose());
    };
    for (int n = 0; n < samples; ++n) {
        const Mat a = random_psd(D);
        const Mat b = random_psd(rank_dist(gen));
        if (y.dot(b * y) <= 1e-12 * y.squaredNorm()) continue;
        const Mat m = xi_dirderiv(xi, a, b);
        const double c = max_rank_one_below(m, z);
        res.min_margin = std::min(res.min_margin, c);
        if (c <= 0.0) {
            res.coupled = false;
            res.witness_a = a;
            res.witness_b = b;
            return res;
        }
    }
    return res;
}

}  // namespace parisi
