#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parisi/characteristics.hpp"
#include "parisi/spin_models.hpp"

namespace parisi {

/// Pointwise grad xi(p(s)) as a step path (symmetrized gradient).
StepPath grad_xi_path(const XiModel& xi, const StepPath& p);

/// q' - t grad xi(p) on the merged breakpoints; q + t grad xi(p) with sign = +1.
StepPath shift_by_grad_xi(const StepPath& q, const XiModel& xi, const StepPath& p, double t, double sign = 1.0);

/// psi(q') + int p.(q - q') + t int xi(p), integrals exact on merged breakpoints.
double evaluate_J(double t, const StepPath& q, const StepPath& qprime, const StepPath& p, const SpinMeasure& mu,
                  const XiModel& xi, const GridSpec& grid = {});

struct CriticalResidual {
    double r1 = 0.0;     // |q - q' + t grad xi(p)|_L1
    double r2 = 0.0;     // |p - d psi(q')|_L1
    double r2_se = 0.0;  // propagated Monte Carlo error of r2
};

CriticalResidual critical_residual(double t, const StepPath& q, const StepPath& qprime, const StepPath& p,
                                   const SpinMeasure& mu, const XiModel& xi, const GradPsiOptions& opt,
                                   std::uint64_t seed);

struct CriticalOptions {
    double damping = 0.5;
    double tol = 1e-4;
    int max_iter = 200;
    GradPsiOptions inner;  // used inside the iteration (same seed every time)
    GradPsiOptions final_eval;  // fresh evaluation at the returned point
};

struct CriticalPoint {
    double t = 0.0;
    StepPath q, qprime, p;
    CriticalResidual residual;
    bool converged = false;
    int iterations = 0;
    std::vector<double> trajectory;  // sup distance between successive iterates
    GradPsiResult grad;              // final evaluation of d psi(q')
};

/// Damped fixed point p <- (1 - theta) p + theta Pi(grad_psi(q + t grad xi(p))) on the merged
/// breakpoints of q and p_init. Non-convergence is reported, not thrown.
CriticalPoint find_critical_point(double t, const StepPath& q, const SpinMeasure& mu, const XiModel& xi,
                                  const StepPath& p_init, const CriticalOptions& opt, std::uint64_t seed);

/// Entrywise PSD projection of increments followed by cumulative re-summation.
StepPath isotonic_repair(const StepPath& p);

struct JumpTransfer {
    bool jump = false;
    double s = 0.0, t = 0.0, t_star = 0.0;
    MatEstimate formula;  // (2 / (t* - t)) int_t^{t*} E[A^T (q'(s+) - q'(s)) A]
    Mat dq;               // q'(s+) - q'(s)
    Mat dp;               // p(s+) - p(s) from the inputs
    Mat dp_se;            // standard error of dp (zero when p is given exactly)
    double max_z = 0.0;   // largest |formula - dp| / combined SE
    bool pass(double z = 3.0) const { return max_z < z; }
};

/// Right side of the jump formula at s from characteristics of (L_{q'}, alpha) in the joint
/// canonical decomposition of (p, q').
JumpTransfer jump_transfer(const StepPath& p, const StepPath& qprime, const SpinMeasure& mu, double s,
                           const GradPsiOptions& opt, std::uint64_t seed);
/// Same at a critical point, with dp and its error taken from the final grad_psi evaluation.
JumpTransfer jump_transfer(const CriticalPoint& cp, const SpinMeasure& mu, double s, const GradPsiOptions& opt,
                           std::uint64_t seed);

struct RsbPair {
    int k1 = 0, k2 = 0;
    double s1 = 0.0, s2 = 0.0;
    Mat delta, se;
    double min_eig = 0.0, max_abs_eig = 0.0, threshold = 0.0;
    std::string cls;  // zero | psd-singular | pd | indefinite
    std::vector<double> directional;  // y^T delta y per direction
    bool violation = false;
};

struct RsbReport {
    std::vector<Vec> directions;
    bool coupled = true;  // hypotheses hold over all direction pairs (sampled)
    std::vector<RsbPair> pairs;
    int violations = 0;
    int nonzero = 0;
    bool simultaneous = true;  // every nonzero increment is PD
};

/// Classifies p(s') - p(s) over all level pairs of the final grad_psi evaluation of cp.
RsbReport simultaneous_rsb_report(const CriticalPoint& cp, const XiModel& xi, const std::vector<Vec>& directions,
                                  int coupling_samples = 200, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------

/// Species weights lambda, per-species D=1 measures, and xi on R^S written as an XiModel
/// in the diagonal entries (s,s).
struct MultiSpeciesModel {
    std::vector<std::string> names;
    std::vector<double> lambda;
    std::vector<SpinMeasure> mu;
    XiModel xi;

    int species() const { return static_cast<int>(lambda.size()); }
    /// With normalized = false the weights need only be positive.
    void validate(bool normalized = true) const;
};

/// Partial derivatives d_s xi at a in R^S.
Vec ms_xi_grad(const MultiSpeciesModel& m, const Vec& a);

/// Sampled check of s-to-s' coupling: a >= b >= 0, a_s > b_s implies d_{s'} xi(a) > d_{s'} xi(b).
bool ms_coupled(const MultiSpeciesModel& m, int s, int s2, int samples = 200, std::uint64_t seed = 0);

struct MultiGrad {
    std::vector<StepPath> p;  // lambda_s d psi_{mu_s}(q_s)
    std::vector<GradPsiResult> per_species;
};

MultiGrad multispecies_grad_psi(const MultiSpeciesModel& m, const std::vector<StepPath>& q,
                                const GradPsiOptions& opt, std::uint64_t seed);

struct MsCriticalPoint {
    double t = 0.0;
    std::vector<StepPath> q, qprime, p;
    bool converged = false;
    int iterations = 0;
    std::vector<double> trajectory;
    MultiGrad grad;
    double r1 = 0.0, r2 = 0.0, r2_se = 0.0;
};

MsCriticalPoint find_ms_critical_point(const MultiSpeciesModel& m, double t, const std::vector<StepPath>& q,
                                       const std::vector<StepPath>& p_init, const CriticalOptions& opt,
                                       std::uint64_t seed);

struct MsReport {
    std::vector<std::vector<char>> coupled;       // coupled[s][s']
    std::vector<std::vector<int>> jump_levels;    // per species, levels k with p(k) > p(k-1)
    std::vector<std::vector<double>> increments;  // per species, p(k) - p(k-1)
    std::vector<std::vector<double>> increment_se;
    int violations = 0;
    bool jumps_coincide = true;
};

MsReport multispecies_rsb_report(const MultiSpeciesModel& m, const MsCriticalPoint& cp, int coupling_samples = 200,
                                 std::uint64_t seed = 0);

}  // namespace parisi
