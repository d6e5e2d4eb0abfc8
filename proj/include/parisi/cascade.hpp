#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "parisi/paths.hpp"
#include "parisi/spin_models.hpp"

namespace parisi {

struct CascadeOptions {
    int truncation = 1000;          // M: largest number of children per node
    double tail_tol = 1e-4;         // stop expanding internal nodes below this relative tail mass
    double leaf_tail_tol = 1e-3;    // same for leaf parents
    bool tail_correction = true;    // add the expected truncated leaf mass (mc_f_mu only)
    bool antithetic = true;         // average each tree over w and -w
    long max_leaves = 20000000;     // guard against runaway tree sizes
};

/// One truncated Ruelle cascade with its Gaussian field.
struct CascadeSample {
    int dim = 1;
    int depth = 0;                         // K
    std::vector<double> zeta;              // zeta_1 < ... < zeta_K
    std::vector<Mat> overlap;              // q value at common depth d = 0..K
    // nodes[d] for d = 0..K; the root is nodes[0][0]
    struct Node {
        long parent = -1;
        double log_raw = 0.0;   // log of the product of raw weights along the path
        Vec field;              // w restricted to the path (cumulative increments)
        double log_tail = -1e300;  // log of expected truncated child mass (times log_raw)
    };
    std::vector<std::vector<Node>> nodes;

    const std::vector<Node>& leaves() const { return nodes.back(); }
    /// Normalized leaf weights (truncated tree only).
    std::vector<double> leaf_weights() const;
};

CascadeSample sample_cascade(const StepPath& q, const CascadeOptions& opt, std::uint64_t seed, std::uint64_t rep = 0);

struct GibbsEstimate {
    std::vector<double> mean, se;
    int reps = 0;
    long samples = 0;   // leaves materialized over all replications
    std::uint64_t seed = 0;

    double value() const { return mean.at(0); }
    double error() const { return se.at(0); }
};

/// Monte Carlo estimate of f_mu(q, x, z) over independent cascade replications.
GibbsEstimate mc_f_mu(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z, int reps,
                      const CascadeOptions& opt, std::uint64_t seed);

/// psi(q) = -f_mu(q, 0, 0).
GibbsEstimate mc_psi(const SpinMeasure& mu, const StepPath& q, int reps, const CascadeOptions& opt, std::uint64_t seed);

/// Observable of n replicas: sigmas[r] is replica r's spin, depth[r*n + r'] the depth of
/// the common ancestor of replicas r, r' (K for the same leaf). Writes `components` values.
struct Observable {
    int replicas = 1;
    int components = 1;
    std::function<void(const std::vector<const Vec*>& sigmas, const std::vector<int>& depth, double* out)> f;
};

/// E <F> under the cascade Gibbs measure <.>_{mu,q,x,z}. One and two replicas are summed
/// exactly within each tree; more replicas are sampled (`tuples` per tree).
GibbsEstimate mc_gibbs(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z, const Observable& obs,
                       int reps, const CascadeOptions& opt, std::uint64_t seed, int tuples = 256);

/// Leaf tilt: reweights each leaf h by exp(g(w(h))) on top of the Gibbs weights.
using LeafTilt = std::function<double(const Vec& w)>;
GibbsEstimate mc_gibbs_tilted(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z,
                              const LeafTilt& tilt, const Observable& obs, int reps, const CascadeOptions& opt,
                              std::uint64_t seed, int tuples = 256);

}  // namespace parisi
