#include "parisi/psd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace parisi {

SymEig sym_eig(const Mat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("sym_eig: matrix not square");
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
    const Eigen::Index n = a.rows();
    SymEig out{Vec(n), Mat(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = es.eigenvalues()(n - 1 - i);
        out.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
    }
    return out;
}

double min_eigenvalue(const Mat& a) {
    if (a.size() == 0) return 0.0;
    return sym_eig(a).values.minCoeff();
}

double max_eigenvalue(const Mat& a) {
    if (a.size() == 0) return 0.0;
    return sym_eig(a).values.maxCoeff();
}

double dot(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("dot: dimension mismatch");
    return (a.array() * b.array()).sum();
}

double frob(const Mat& a) { return a.norm(); }

bool is_symmetric(const Mat& a, double tol) {
    if (a.rows() != a.cols()) return false;
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

bool is_psd(const Mat& a, double tol) { return is_symmetric(a, 1e-12) && min_eigenvalue(a) >= -tol; }

bool loewner_leq(const Mat& a, const Mat& b, double tol) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("loewner_leq: dimension mismatch");
    return min_eigenvalue(b - a) >= -tol;
}

Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

Mat sqrt_psd(const Mat& a) {
    SymEig e = sym_eig(a);
    if (e.values.size() && e.values.minCoeff() < -kPsdTol)
        throw std::invalid_argument("sqrt_psd: matrix has an eigenvalue below -psd_tol");
    Vec r = e.values.cwiseMax(0.0).cwiseSqrt();
    return e.vectors * r.asDiagonal() * e.vectors.transpose();
}

Mat project_psd(const Mat& a) {
    SymEig e = sym_eig(a);
    Vec c = e.values.cwiseMax(0.0);
    return symmetrize(e.vectors * c.asDiagonal() * e.vectors.transpose());
}

Mat cholesky_psd(const Mat& a) {
    const Eigen::Index n = a.rows();
    Mat l = Mat::Zero(n, n);
    const double scale = std::max(1e-300, a.diagonal().cwiseAbs().maxCoeff());
    for (Eigen::Index j = 0; j < n; ++j) {
        double d = a(j, j);
        for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (d <= 1e-14 * scale) continue;  // degenerate direction, column stays zero
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / ljj;
        }
    }
    return l;
}

}  // namespace parisi
