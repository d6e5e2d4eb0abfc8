#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "parisi/parisi_pde.hpp"

namespace parisi {

struct MatEstimate {
    Mat mean, se;
};

struct ScalarEstimate {
    double mean = 0.0, se = 0.0;
};

/// Initial condition: a fixed point, or sqrt(2 L(0)) eta with eta standard Gaussian.
struct X0Spec {
    bool gaussian = false;
    Vec x0;  // empty means the origin

    static X0Spec fixed(const Vec& x) { return {false, x}; }
    static X0Spec gaussian_start() { return {true, Vec()}; }
};

struct CharOptions {
    int n_paths = 100000;
    double dt_rel = 1e-3;          // step size as a fraction of T
    bool antithetic = true;        // paths come in pairs driven by +dW and -dW
    int slice_stride = 0;          // steps between recomputed field slices; 0 picks 1 (D=1) or 8 (D>=2)
    int block = 256;               // units per RNG block
    int gap_steps = 0;             // if > 0, every record gap gets exactly this many steps
    std::vector<double> record_times;  // extra record times on top of the level times
};

/// Euler-Maruyama characteristics with per-step moments and per-unit values at record times.
/// A unit is an antithetic pair (or a single path when antithetic is off).
struct CharacteristicEnsemble {
    int dim = 1;
    double T = 0.0;
    long units = 0;
    int paths_per_unit = 1;
    Decomposition decomp;
    std::vector<double> level_times;  // solution recursion levels
    std::vector<double> level_alpha;  // alpha on each level interval

    struct StepStat {
        double t = 0.0;
        MatEstimate R, a, xx;  // E[grad grad^T], E[Hessian], E[X X^T]
    };
    std::vector<StepStat> steps;

    std::vector<double> record_times;
    std::vector<Mat> record_Ldot;     // L-dot on (t_{r-1}, t_r); zero for r = 0
    std::vector<double> record_alpha; // alpha on (t_{r-1}, t_r); zero for r = 0
    // unit_data[r][u * stride ...]: G (D^2), A (D^2), int_{t_{r-1}}^{t_r} A (x) A (D^4)
    std::vector<std::vector<double>> unit_data;

    double max_grad_norm = 0.0;
    FieldValue start;      // fields at x0 (fixed start only)
    bool fixed_start = true;

    int stride() const { return 2 * dim * dim + dim * dim * dim * dim; }
    int record_index(double t, double tol = 1e-9) const;

    /// Read-only view of one unit's record values.
    struct UnitView {
        const CharacteristicEnsemble* ens;
        long u;
        Mat G(int r) const;
        Mat A(int r) const;
        /// int A^T M A dt over (t_{r-1}, t_r].
        Mat quad(int r, const Mat& M) const;
    };

    MatEstimate reduce(const std::function<Mat(const UnitView&)>& f) const;
    ScalarEstimate reduce_scalar(const std::function<double(const UnitView&)>& f) const;

    MatEstimate R_at(int r) const;
    MatEstimate a_at(int r) const;
    /// int_{t_{r1}}^{t_{r2}} E[A^T M A] dt for a fixed matrix M.
    MatEstimate quad_integral(int r1, int r2, const Mat& M) const;
};

CharacteristicEnsemble simulate(const ParisiSolution& sol, const X0Spec& x0, const CharOptions& opt,
                                std::uint64_t seed);

struct RIdentityReport {
    std::vector<double> times;
    std::vector<MatEstimate> residual;   // R(t) - R(0) - 2 int_0^t E[A^T Ldot A]
    std::vector<MatEstimate> companion;  // E[A_t] - E[A_T] - int_t^T alpha dR
    double max_z = 0.0;                  // largest |mean| / se over both identities
    double max_abs = 0.0;
    bool pass(double z = 3.0) const { return max_z < z; }
};

/// Entries with zero standard error must vanish to 1e-12.
RIdentityReport check_R_identity(const CharacteristicEnsemble& ens);

struct FdCheck {
    StepPath direction;
    double fd = 0.0;         // finite-difference slope of psi along the direction
    double predicted = 0.0;  // int p . direction
    double predicted_se = 0.0;
    bool central = true;
    double tol = 0.0;
    bool pass = false;
};

struct GradPsiOptions {
    CharOptions ch;
    GridSpec grid;
    bool fd_check = true;
    int fd_directions = 2;
    double fd_eps = 1e-3;
    double fd_abs_tol = 2e-3;
};

struct GradPsiResult {
    StepPath p;      // after PSD repair of the increments
    StepPath p_raw;  // R read off at the quantile points
    std::vector<Mat> se;
    double repair = 0.0;  // largest entry change made by the repair
    double max_se = 0.0;
    std::vector<int> record_of_level;  // ensemble record read for each level of q (-1 if none)
    bool repair_ok = true;  // repair <= 3 * max_se (or exactly zero)
    std::vector<FdCheck> fd;
    bool fd_ok = true;
    CharacteristicEnsemble ensemble;
};

/// p = d psi / d q read from R at the quantile points of q's pinned canonical decomposition.
GradPsiResult grad_psi(const SpinMeasure& mu, const StepPath& q, const GradPsiOptions& opt, std::uint64_t seed);

/// Increment p_{k2} - p_{k1} between levels of a grad_psi result, with its standard error
/// computed from the same per-unit values.
MatEstimate level_increment(const GradPsiResult& g, int k1, int k2);

/// Gateaux finite-difference oracle (psi(q + eps d) - psi(q - eps d)) / 2 eps, forward when
/// q - eps d leaves the path class. The grid extent is frozen from q.
double psi_directional_fd(const SpinMeasure& mu, const StepPath& q, const StepPath& d, double eps,
                          const GridSpec& grid, bool* central = nullptr);

/// Random increasing direction on q's breakpoints with unit L1 norm.
StepPath random_direction(const StepPath& q, std::uint64_t seed);

/// d/d eps Phi^eps(0, x0) for (L + eps L', alpha), from the characteristics of (L, alpha).
ScalarEstimate functional_derivative(const SpinMeasure& mu, const StepPath& q, const LipschitzPath& Lprime,
                                     const Vec& x0, const CharOptions& opt, const GridSpec& grid,
                                     std::uint64_t seed);
/// Same, from an existing ensemble started at a fixed point.
ScalarEstimate functional_derivative(const CharacteristicEnsemble& ens, const LipschitzPath& Lprime);

/// V(q) by Gauss-Legendre in s and Gauss-Hermite in eta over cascade Gibbs averages.
struct VEstimate {
    Mat mean, se;
};
VEstimate v_of_q(const SpinMeasure& mu, const StepPath& q, int s_nodes, int eta_nodes, int reps,
                 std::uint64_t seed);

struct LeftEndpointReport {
    Mat p0, p0_se;          // from grad_psi
    Mat magnetization;      // E<sigma>_q from the cascade oracle
    Mat magnetization_se;
    Mat mm;                 // E<sigma> E<sigma>^T
    Mat V, V_se;
    Mat rhs, rhs_se;        // mm + 2 V
    double max_z = 0.0;
    bool pass = false;
};

LeftEndpointReport left_endpoint_check(const SpinMeasure& mu, const StepPath& q, const GradPsiOptions& opt,
                                       int reps, std::uint64_t seed);

}  // namespace parisi
