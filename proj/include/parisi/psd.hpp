#pragma once

#include <Eigen/Dense>

namespace parisi {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Tolerance for membership in the PSD cone.
inline constexpr double kPsdTol = 1e-10;

struct SymEig {
    Vec values;   // descending
    Mat vectors;  // columns match values
};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
SymEig sym_eig(const Mat& a);

double min_eigenvalue(const Mat& a);
double max_eigenvalue(const Mat& a);

// Frobenius inner product a.b = tr(a b^T) and norm |a|.
double dot(const Mat& a, const Mat& b);
double frob(const Mat& a);

bool is_symmetric(const Mat& a, double tol = 1e-12);
bool is_psd(const Mat& a, double tol = kPsdTol);

/// True iff the smallest eigenvalue of b - a is >= -tol.
bool loewner_leq(const Mat& a, const Mat& b, double tol = kPsdTol);

/// Spectral square root; throws if an eigenvalue is below -kPsdTol.
Mat sqrt_psd(const Mat& a);

/// Nearest PSD matrix in Frobenius norm (eigenvalue clamping).
Mat project_psd(const Mat& a);

Mat symmetrize(const Mat& a);

/// Lower-triangular C with C C^T = a, tolerating singular a.
Mat cholesky_psd(const Mat& a);

}  // namespace parisi
