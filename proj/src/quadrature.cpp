#include "parisi/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace parisi {

GaussRule gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
    static std::mutex mu;
    static std::map<int, GaussRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (auto it = cache.find(n); it != cache.end()) return it->second;

    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    Mat j = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Mat> es(j);
    GaussRule r;
    for (int i = 0; i < n; ++i) {
        r.x.push_back(es.eigenvalues()(i));
        const double v = es.eigenvectors()(0, i);
        r.w.push_back(v * v);
    }
    // symmetrize to remove round-off asymmetry
    for (int i = 0; i < n / 2; ++i) {
        const double x = 0.5 * (r.x[n - 1 - i] - r.x[i]);
        const double w = 0.5 * (r.w[n - 1 - i] + r.w[i]);
        r.x[i] = -x;
        r.x[n - 1 - i] = x;
        r.w[i] = r.w[n - 1 - i] = w;
    }
    if (n % 2) r.x[n / 2] = 0.0;
    double tot = 0.0;
    for (double w : r.w) tot += w;
    for (double& w : r.w) w /= tot;
    cache[n] = r;
    return r;
}

TensorRule gauss_hermite_tensor(int n, int dim) {
    GaussRule g = gauss_hermite(n);
    long total = 1;
    for (int d = 0; d < dim; ++d) total *= n;
    TensorRule t;
    t.points.resize(dim, total);
    t.w.resize(static_cast<std::size_t>(total));
    for (long idx = 0; idx < total; ++idx) {
        long r = idx;
        double w = 1.0;
        for (int d = 0; d < dim; ++d) {
            const int k = static_cast<int>(r % n);
            r /= n;
            t.points(d, idx) = g.x[static_cast<std::size_t>(k)];
            w *= g.w[static_cast<std::size_t>(k)];
        }
        t.w[static_cast<std::size_t>(idx)] = w;
    }
    return t;
}

int default_gh_nodes(int dim) {
    switch (dim) {
        case 1: return 48;
        case 2: return 20;
        case 3: return 10;
        default: return 6;
    }
}

GaussRule gauss_legendre01(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre01: n must be >= 1");
    Mat j = Mat::Zero(n, n);
    for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = k / std::sqrt(4.0 * k * k - 1.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(j);
    GaussRule r;
    for (int i = 0; i < n; ++i) {
        r.x.push_back(0.5 * (es.eigenvalues()(i) + 1.0));
        const double v = es.eigenvectors()(0, i);
        r.w.push_back(v * v);
    }
    return r;
}

}  // namespace parisi
