#pragma once

#include <memory>
#include <string>
#include <vector>

#include "parisi/paths.hpp"
#include "parisi/spin_models.hpp"

namespace parisi {

struct GridSpec {
    int cells = 256;     // spacing h = x_max / cells; nodes per axis = 2 cells + 1
    double x_max = 0.0;  // 0 selects the default extent
    int gh_nodes = 0;    // 0 selects default_gh_nodes(D)
};

/// Phi, grad Phi, Hessian at one point.
struct FieldValue {
    double value = 0.0;
    Vec grad;
    Mat hess;
};

/// Regular tensor grid [-x_max, x_max]^D with n nodes per axis.
struct Grid {
    int dim = 1;
    int n = 0;
    double x_max = 0.0, h = 0.0;

    long size() const;
    double coord(int i) const { return -x_max + i * h; }
    bool contains(const Vec& x, double slack = 1e-12) const;
};

/// Number of stored scalars per node: Phi, grad (D), Hessian upper triangle.
int field_width(int dim);

/// Fields sampled on a Grid at a fixed time; node-major layout.
struct FieldGrid {
    double t = 0.0;
    Grid grid;
    std::vector<double> data;

    /// Cubic Lagrange interpolation; points outside the grid use the linear-growth
    /// extrapolation Phi(b) + grad(b).(x - b) from the nearest boundary point b.
    FieldValue sample(const Vec& x) const;
    /// Gradient only (cheaper).
    Vec sample_grad(const Vec& x) const;
    /// Allocation-free form of sample: writes field_width(D) packed values
    /// (Phi, grad, Hessian upper triangle row-major) to out.
    void sample_packed(const double* x, double* out) const;
    FieldValue node(long flat) const;
};

double terminal_condition(const SpinMeasure& mu, const Mat& LT, const Vec& x);
FieldValue terminal_fields(const SpinMeasure& mu, const Mat& LT, const Vec& x);

/// Default extent (max atom norm) * 2 tr(2 L(T)) + 8 sqrt(2 lambda_max(L(T))).
double default_extent(const SpinMeasure& mu, const Mat& LT);

class ParisiSolution {
public:
    SpinMeasure mu;
    Decomposition decomp;
    GridSpec spec;          // resolved (x_max and gh_nodes filled in)
    Grid grid;
    std::vector<double> times;    // recursion levels 0 = r_0 < ... < r_n = T
    std::vector<double> s_level;  // alpha on [r_j, r_{j+1})
    std::vector<Mat> L_at;        // L(r_j)
    std::vector<FieldGrid> grids; // grids[j] holds the fields at r_j for 0 < j < n

    int dim() const { return mu.dim; }
    double T() const { return decomp.T(); }
    /// Level index j with t in [r_j, r_{j+1}); n-1 for t = T.
    int level_of(double t) const;

    FieldValue eval(double t, const Vec& x) const;
    /// Fields on the solution grid at time t (one quadrature step from the level above).
    FieldGrid slice(double t, int gh_nodes = 0) const;
};

enum class What { Value, Grad, Hess };

ParisiSolution solve_parisi(const SpinMeasure& mu, const Decomposition& decomp, const GridSpec& spec = {});

/// Returns a 1x1 matrix for Value, a D x 1 matrix for Grad and D x D for Hess.
Mat eval_solution(const ParisiSolution& sol, double t, const Vec& x, What what);

/// |d_t Phi + <Ldot, Hess Phi + alpha grad Phi grad Phi^T>| with a central difference in t.
double pde_residual(const ParisiSolution& sol, double t, const Vec& x);

/// psi(q) = -Phi(0,0) for the canonical decomposition of q.
double psi_value(const SpinMeasure& mu, const StepPath& q, const GridSpec& spec = {});

/// Grid spec with the extent fixed from q, for comparing nearby paths on one grid.
GridSpec frozen_spec(const SpinMeasure& mu, const StepPath& q, const GridSpec& spec = {});

}  // namespace parisi
