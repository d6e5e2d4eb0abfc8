#pragma once

#include <vector>

#include "parisi/psd.hpp"

namespace parisi {

/// Gauss-Hermite rule for the standard normal law: E f(g) ~ sum w_i f(x_i).
struct GaussRule {
    std::vector<double> x, w;
};

GaussRule gauss_hermite(int n);

/// Gauss-Legendre rule on [0,1] (weights sum to 1).
GaussRule gauss_legendre01(int n);

/// Tensor-product rule in R^dim (points as columns).
struct TensorRule {
    Mat points;  // dim x N
    std::vector<double> w;
};

TensorRule gauss_hermite_tensor(int n, int dim);

/// Default nodes per axis: 48 (D=1), 20 (D=2), 10 (D=3), 6 beyond.
int default_gh_nodes(int dim);

}  // namespace parisi
