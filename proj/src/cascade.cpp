#include "parisi/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "parisi/parallel.hpp"
#include "parisi/rng.hpp"

namespace parisi {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp(const std::vector<double>& v) {
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

GibbsEstimate summarize(const std::vector<std::vector<double>>& per_rep, long samples, std::uint64_t seed) {
    GibbsEstimate e;
    e.reps = static_cast<int>(per_rep.size());
    e.samples = samples;
    e.seed = seed;
    const std::size_t c = per_rep.empty() ? 0 : per_rep.front().size();
    e.mean.assign(c, 0.0);
    e.se.assign(c, 0.0);
    for (const auto& r : per_rep)
        for (std::size_t k = 0; k < c; ++k) e.mean[k] += r[k];
    for (std::size_t k = 0; k < c; ++k) e.mean[k] /= e.reps;
    if (e.reps > 1) {
        for (std::size_t k = 0; k < c; ++k) {
            double v = 0.0;
            for (const auto& r : per_rep) v += (r[k] - e.mean[k]) * (r[k] - e.mean[k]);
            e.se[k] = std::sqrt(v / (e.reps - 1) / e.reps);
        }
    }
    return e;
}

// Log of sum_sigma mu(sigma) exp(sqrt2 sigma.w + sigma.x + sigma^T (z - q1 + extra) sigma).
struct AtomTerms {
    std::vector<Vec> atoms;
    std::vector<double> base;  // log mu + sigma.x + sigma^T (z - q1) sigma

    AtomTerms(const SpinMeasure& mu, const Vec& x, const Mat& zq) {
        for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
            const Vec& s = mu.atoms[i];
            atoms.push_back(s);
            base.push_back(std::log(mu.weights[i]) + s.dot(x) + s.dot(zq * s));
        }
    }

    double log_y(const Vec& w, double sign, const Mat* extra = nullptr) const {
        double m = kNegInf;
        double buf[64];
        std::vector<double> big;
        double* e = buf;
        if (atoms.size() > 64) {
            big.resize(atoms.size());
            e = big.data();
        }
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            e[i] = base[i] + sign * std::sqrt(2.0) * atoms[i].dot(w);
            if (extra) e[i] += atoms[i].dot(*extra * atoms[i]);
            m = std::max(m, e[i]);
        }
        double s = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) s += std::exp(e[i] - m);
        return m + std::log(s);
    }
};

}  // namespace

std::vector<double> CascadeSample::leaf_weights() const {
    const auto& lv = leaves();
    std::vector<double> lw(lv.size());
    for (std::size_t i = 0; i < lv.size(); ++i) lw[i] = lv[i].log_raw;
    const double z = logsumexp(lw);
    for (double& v : lw) v = std::exp(v - z);
    return lw;
}

CascadeSample sample_cascade(const StepPath& q, const CascadeOptions& opt, std::uint64_t seed, std::uint64_t rep) {
    q.validate();
    if (opt.truncation < 1) throw std::invalid_argument("sample_cascade: truncation must be >= 1");
    const StepPath m = merge_equal(q);
    CascadeSample cs;
    cs.dim = m.dim;
    cs.depth = m.levels() - 1;
    for (int k = 1; k <= cs.depth; ++k) cs.zeta.push_back(m.breakpoints[static_cast<std::size_t>(k)]);
    cs.overlap = m.values;

    std::mt19937_64 gen(stream_seed(seed, {0x63617363ULL, rep}));
    std::normal_distribution<double> nd;
    std::exponential_distribution<double> ed(1.0);
    auto gauss = [&](const Mat& chol) {
        Vec g(cs.dim);
        for (int a = 0; a < cs.dim; ++a) g(a) = nd(gen);
        return Vec(chol * g);
    };

    cs.nodes.resize(static_cast<std::size_t>(cs.depth + 1));
    CascadeSample::Node root;
    root.field = gauss(cholesky_psd(m.values[0]));
    cs.nodes[0].push_back(root);
    long total = 1;
    for (int k = 1; k <= cs.depth; ++k) {
        const double zeta = cs.zeta[static_cast<std::size_t>(k - 1)];
        const Mat chol = cholesky_psd(m.values[static_cast<std::size_t>(k)] - m.values[static_cast<std::size_t>(k - 1)]);
        const double tol = k == cs.depth ? opt.leaf_tail_tol : opt.tail_tol;
        auto& parents = cs.nodes[static_cast<std::size_t>(k - 1)];
        auto& children = cs.nodes[static_cast<std::size_t>(k)];
        for (std::size_t p = 0; p < parents.size(); ++p) {
            double gamma = 0.0, sum = 0.0, tail = 0.0;
            for (int n = 0; n < opt.truncation; ++n) {
                gamma += ed(gen);
                const double raw = std::pow(gamma, -1.0 / zeta);
                sum += raw;
                CascadeSample::Node c;
                c.parent = static_cast<long>(p);
                c.log_raw = parents[p].log_raw + std::log(raw);
                c.field = parents[p].field + gauss(chol);
                children.push_back(std::move(c));
                // expected mass of the Poisson points beyond gamma
                tail = zeta / (1.0 - zeta) * std::pow(gamma, 1.0 - 1.0 / zeta);
                if (tail <= tol * sum) break;
            }
            parents[p].log_tail = parents[p].log_raw + std::log(tail);
            if (static_cast<long>(children.size()) + total > opt.max_leaves)
                throw std::runtime_error("sample_cascade: tree exceeds max_leaves; lower the truncation");
        }
        total += static_cast<long>(children.size());
    }
    return cs;
}

GibbsEstimate mc_f_mu(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z, int reps,
                      const CascadeOptions& opt, std::uint64_t seed) {
    mu.validate();
    if (q.dim != mu.dim || x.size() != mu.dim) throw std::invalid_argument("mc_f_mu: dimension mismatch");
    if (reps < 1) throw std::invalid_argument("mc_f_mu: reps must be >= 1");
    const Mat q1 = q.values.back();
    const AtomTerms terms(mu, x, z - q1);
    std::vector<std::vector<double>> out(static_cast<std::size_t>(reps));
    std::vector<long> leaves(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
        const CascadeSample cs = sample_cascade(q, opt, seed, r);
        const auto& lv = cs.leaves();
        leaves[r] = static_cast<long>(lv.size());
        Mat last_inc = Mat::Zero(cs.dim, cs.dim);
        if (cs.depth > 0)
            last_inc = cs.overlap[static_cast<std::size_t>(cs.depth)] - cs.overlap[static_cast<std::size_t>(cs.depth - 1)];
        const bool tail = opt.tail_correction && cs.depth > 0;
        double acc = 0.0;
        const int passes = opt.antithetic ? 2 : 1;
        for (int pass = 0; pass < passes; ++pass) {
            const double sign = pass == 0 ? 1.0 : -1.0;
            std::vector<double> num, den;
            num.reserve(lv.size());
            den.reserve(lv.size());
            for (const auto& h : lv) {
                num.push_back(h.log_raw + terms.log_y(h.field, sign));
                den.push_back(h.log_raw);
            }
            if (tail) {
                for (const auto& p : cs.nodes[static_cast<std::size_t>(cs.depth - 1)]) {
                    num.push_back(p.log_tail + terms.log_y(p.field, sign, &last_inc));
                    den.push_back(p.log_tail);
                }
            }
            acc += logsumexp(num) - logsumexp(den);
        }
        out[r] = {acc / passes};
    });
    long total = 0;
    for (long l : leaves) total += l;
    return summarize(out, total, seed);
}

GibbsEstimate mc_psi(const SpinMeasure& mu, const StepPath& q, int reps, const CascadeOptions& opt, std::uint64_t seed) {
    GibbsEstimate e = mc_f_mu(mu, q, Vec::Zero(mu.dim), Mat::Zero(mu.dim, mu.dim), reps, opt, seed);
    for (double& v : e.mean) v = -v;
    return e;
}

GibbsEstimate mc_gibbs(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z, const Observable& obs,
                       int reps, const CascadeOptions& opt, std::uint64_t seed, int tuples) {
    return mc_gibbs_tilted(mu, q, x, z, nullptr, obs, reps, opt, seed, tuples);
}

GibbsEstimate mc_gibbs_tilted(const SpinMeasure& mu, const StepPath& q, const Vec& x, const Mat& z,
                              const LeafTilt& tilt, const Observable& obs, int reps, const CascadeOptions& opt,
                              std::uint64_t seed, int tuples) {
    mu.validate();
    if (q.dim != mu.dim || x.size() != mu.dim) throw std::invalid_argument("mc_gibbs: dimension mismatch");
    if (obs.replicas < 1 || obs.components < 1 || !obs.f) throw std::invalid_argument("mc_gibbs: invalid observable");
    const Mat q1 = q.values.back();
    const AtomTerms terms(mu, x, z - q1);
    const std::size_t A = mu.atoms.size();
    const int n = obs.replicas, C = obs.components;
    std::vector<std::vector<double>> out(static_cast<std::size_t>(reps));
    std::vector<long> leaves(static_cast<std::size_t>(reps));

    parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
        const CascadeSample cs = sample_cascade(q, opt, seed, r);
        const auto& lv = cs.leaves();
        leaves[r] = static_cast<long>(lv.size());
        const int K = cs.depth;
        std::vector<double> acc(static_cast<std::size_t>(C), 0.0), val(static_cast<std::size_t>(C));
        const int passes = opt.antithetic ? 2 : 1;
        std::mt19937_64 gen(stream_seed(seed, {0x74757071ULL, r}));
        for (int pass = 0; pass < passes; ++pass) {
            const double sign = pass == 0 ? 1.0 : -1.0;
            // Gibbs weights G(h, sigma), leaf-major
            std::vector<double> lg(lv.size() * A);
            for (std::size_t h = 0; h < lv.size(); ++h) {
                const Vec w = sign * lv[h].field;
                const double lt = lv[h].log_raw + (tilt ? tilt(w) : 0.0);
                for (std::size_t a = 0; a < A; ++a)
                    lg[h * A + a] = lt + terms.base[a] + std::sqrt(2.0) * mu.atoms[a].dot(w);
            }
            const double lz = logsumexp(lg);
            std::vector<double> g(lg.size());
            for (std::size_t i = 0; i < lg.size(); ++i) g[i] = std::exp(lg[i] - lz);

            if (n == 1) {
                std::vector<int> depth{K};
                for (std::size_t a = 0; a < A; ++a) {
                    double pa = 0.0;
                    for (std::size_t h = 0; h < lv.size(); ++h) pa += g[h * A + a];
                    obs.f({&mu.atoms[a]}, depth, val.data());
                    for (int c = 0; c < C; ++c) acc[static_cast<std::size_t>(c)] += pa * val[static_cast<std::size_t>(c)];
                }
            } else if (n == 2) {
                // m_a(sigma) aggregated per node, bottom-up
                std::vector<std::vector<double>> agg(static_cast<std::size_t>(K + 1));
                agg[static_cast<std::size_t>(K)] = g;
                for (int d = K; d >= 1; --d) {
                    const auto& nodes = cs.nodes[static_cast<std::size_t>(d)];
                    auto& up = agg[static_cast<std::size_t>(d - 1)];
                    up.assign(cs.nodes[static_cast<std::size_t>(d - 1)].size() * A, 0.0);
                    const auto& cur = agg[static_cast<std::size_t>(d)];
                    for (std::size_t i = 0; i < nodes.size(); ++i)
                        for (std::size_t a = 0; a < A; ++a)
                            up[static_cast<std::size_t>(nodes[i].parent) * A + a] += cur[i * A + a];
                }
                // Q_d(a, b) = sum over depth-d nodes of m(a) m(b)
                std::vector<std::vector<double>> Q(static_cast<std::size_t>(K + 2), std::vector<double>(A * A, 0.0));
                for (int d = 0; d <= K; ++d) {
                    const auto& m = agg[static_cast<std::size_t>(d)];
                    const std::size_t cnt = m.size() / A;
                    for (std::size_t i = 0; i < cnt; ++i)
                        for (std::size_t a = 0; a < A; ++a)
                            for (std::size_t b = 0; b < A; ++b)
                                Q[static_cast<std::size_t>(d)][a * A + b] += m[i * A + a] * m[i * A + b];
                }
                // same leaf: the two replicas may still carry different spins
                for (int d = 0; d <= K; ++d) {
                    std::vector<int> depth{K, d, d, K};
                    for (std::size_t a = 0; a < A; ++a)
                        for (std::size_t b = 0; b < A; ++b) {
                            const double p = Q[static_cast<std::size_t>(d)][a * A + b] -
                                             (d < K ? Q[static_cast<std::size_t>(d + 1)][a * A + b] : 0.0);
                            if (p == 0.0) continue;
                            obs.f({&mu.atoms[a], &mu.atoms[b]}, depth, val.data());
                            for (int c = 0; c < C; ++c)
                                acc[static_cast<std::size_t>(c)] += p * val[static_cast<std::size_t>(c)];
                        }
                }
            } else {
                std::vector<double> cdf(g.size());
                double run = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) cdf[i] = (run += g[i]);
                std::uniform_real_distribution<double> ud(0.0, run);
                std::vector<std::size_t> pick(static_cast<std::size_t>(n));
                std::vector<const Vec*> sig(static_cast<std::size_t>(n));
                std::vector<int> depth(static_cast<std::size_t>(n * n));
                auto ancestor = [&](long leaf, int d) {
                    long idx = leaf;
                    for (int k = K; k > d; --k) idx = cs.nodes[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx)].parent;
                    return idx;
                };
                for (int t = 0; t < tuples; ++t) {
                    for (int i = 0; i < n; ++i) {
                        const double u = ud(gen);
                        std::size_t k = static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
                        k = std::min(k, g.size() - 1);
                        pick[static_cast<std::size_t>(i)] = k;
                        sig[static_cast<std::size_t>(i)] = &mu.atoms[k % A];
                    }
                    for (int i = 0; i < n; ++i)
                        for (int j = 0; j < n; ++j) {
                            const long hi = static_cast<long>(pick[static_cast<std::size_t>(i)] / A);
                            const long hj = static_cast<long>(pick[static_cast<std::size_t>(j)] / A);
                            int d = K;
                            while (d > 0 && ancestor(hi, d) != ancestor(hj, d)) --d;
                            depth[static_cast<std::size_t>(i * n + j)] = d;
                        }
                    obs.f(sig, depth, val.data());
                    for (int c = 0; c < C; ++c)
                        acc[static_cast<std::size_t>(c)] += val[static_cast<std::size_t>(c)] / tuples;
                }
            }
        }
        for (double& v : acc) v /= passes;
        out[r] = acc;
    });
    long total = 0;
    for (long l : leaves) total += l;
    return summarize(out, total, seed);
}

}  // namespace parisi
