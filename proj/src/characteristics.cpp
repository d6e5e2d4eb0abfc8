#include "parisi/characteristics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "parisi/cascade.hpp"
#include "parisi/parallel.hpp"
#include "parisi/quadrature.hpp"
#include "parisi/rng.hpp"

namespace parisi {

namespace {

// Blend of two slices on the same grid: (1 - w) a + w b.
FieldGrid blend(const FieldGrid& a, const FieldGrid& b, double w, double t) {
    FieldGrid out;
    out.t = t;
    out.grid = a.grid;
    out.data.resize(a.data.size());
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = (1.0 - w) * a.data[i] + w * b.data[i];
    return out;
}

FieldGrid terminal_slice(const ParisiSolution& sol) { return sol.slice(sol.T()); }

struct Block {
    std::mt19937_64 gen;
    long u0 = 0, nu = 0;       // first unit and unit count
    std::vector<double> X;     // paths x D
    std::vector<double> prevA; // paths x D^2
    std::vector<double> acc;   // units x D^4
    std::vector<double> stat;  // sums and squares of G, A, X X^T per step
    double max_grad = 0.0;
    long escapes = 0;
};

}  // namespace

int CharacteristicEnsemble::record_index(double t, double tol) const {
    const double scale = std::max(1.0, T);
    for (std::size_t r = 0; r < record_times.size(); ++r)
        if (std::abs(record_times[r] - t) <= tol * scale) return static_cast<int>(r);
    return -1;
}

Mat CharacteristicEnsemble::UnitView::G(int r) const {
    const int D = ens->dim;
    const double* p = &ens->unit_data[static_cast<std::size_t>(r)][static_cast<std::size_t>(u * ens->stride())];
    return Eigen::Map<const Mat>(p, D, D);
}

Mat CharacteristicEnsemble::UnitView::A(int r) const {
    const int D = ens->dim;
    const double* p = &ens->unit_data[static_cast<std::size_t>(r)][static_cast<std::size_t>(u * ens->stride() + D * D)];
    return Eigen::Map<const Mat>(p, D, D);
}

Mat CharacteristicEnsemble::UnitView::quad(int r, const Mat& M) const {
    const int D = ens->dim;
    const double* aa =
        &ens->unit_data[static_cast<std::size_t>(r)][static_cast<std::size_t>(u * ens->stride() + 2 * D * D)];
    Mat out = Mat::Zero(D, D);
    // (A M A)_{ik} = sum_{jl} A_ij M_jl A_lk
    for (int i = 0; i < D; ++i)
        for (int k = 0; k < D; ++k) {
            double s = 0.0;
            for (int j = 0; j < D; ++j)
                for (int l = 0; l < D; ++l) s += aa[((i * D + j) * D + l) * D + k] * M(j, l);
            out(i, k) = s;
        }
    return out;
}

MatEstimate CharacteristicEnsemble::reduce(const std::function<Mat(const UnitView&)>& f) const {
    MatEstimate e;
    e.mean = Mat::Zero(dim, dim);
    Mat sq = Mat::Zero(dim, dim);
    for (long u = 0; u < units; ++u) {
        const Mat v = f(UnitView{this, u});
        e.mean += v;
        sq += v.cwiseProduct(v);
    }
    const double n = static_cast<double>(units);
    e.mean /= n;
    e.se = Mat::Zero(dim, dim);
    if (units > 1) {
        const Mat var = ((sq / n - e.mean.cwiseProduct(e.mean)) * (n / (n - 1.0))).cwiseMax(0.0);
        e.se = (var / n).cwiseSqrt();
    }
    return e;
}

ScalarEstimate CharacteristicEnsemble::reduce_scalar(const std::function<double(const UnitView&)>& f) const {
    double s = 0.0, sq = 0.0;
    for (long u = 0; u < units; ++u) {
        const double v = f(UnitView{this, u});
        s += v;
        sq += v * v;
    }
    const double n = static_cast<double>(units);
    ScalarEstimate e;
    e.mean = s / n;
    if (units > 1) e.se = std::sqrt(std::max(0.0, (sq / n - e.mean * e.mean) * n / (n - 1.0)) / n);
    return e;
}

MatEstimate CharacteristicEnsemble::R_at(int r) const {
    return reduce([r](const UnitView& v) { return v.G(r); });
}

MatEstimate CharacteristicEnsemble::a_at(int r) const {
    return reduce([r](const UnitView& v) { return v.A(r); });
}

MatEstimate CharacteristicEnsemble::quad_integral(int r1, int r2, const Mat& M) const {
    return reduce([&](const UnitView& v) {
        Mat s = Mat::Zero(dim, dim);
        for (int r = r1 + 1; r <= r2; ++r) s += v.quad(r, M);
        return s;
    });
}

// ---------------------------------------------------------------------------

CharacteristicEnsemble simulate(const ParisiSolution& sol, const X0Spec& x0spec, const CharOptions& opt,
                                std::uint64_t seed) {
    const int D = sol.dim();
    if (D > 3) throw std::invalid_argument("simulate: D <= 3 only");
    if (opt.n_paths < 1) throw std::invalid_argument("simulate: n_paths must be >= 1");
    if (!(opt.dt_rel > 0.0)) throw std::invalid_argument("simulate: dt_rel must be positive");
    const Vec x0 = x0spec.x0.size() ? x0spec.x0 : Vec::Zero(D);
    if (x0.size() != D) throw std::invalid_argument("simulate: x0 has the wrong dimension");

    CharacteristicEnsemble ens;
    ens.dim = D;
    ens.T = sol.T();
    ens.decomp = sol.decomp;
    ens.level_times = sol.times;
    ens.level_alpha = sol.s_level;
    ens.fixed_start = !x0spec.gaussian;
    const int P = opt.antithetic ? 2 : 1;
    const int D2 = D * D, D4 = D2 * D2;
    const int S = ens.stride();

    if (sol.times.size() < 2) {
        // T = 0: the characteristic does not move and L(0) = 0.
        ens.units = 1;
        ens.record_times = {0.0};
        ens.record_Ldot = {Mat::Zero(D, D)};
        ens.record_alpha = {0.0};
        ens.start = sol.eval(0.0, x0);
        ens.unit_data.assign(1, std::vector<double>(static_cast<std::size_t>(S), 0.0));
        const Mat G = ens.start.grad * ens.start.grad.transpose();
        std::copy(G.data(), G.data() + D2, ens.unit_data[0].begin());
        std::copy(ens.start.hess.data(), ens.start.hess.data() + D2, ens.unit_data[0].begin() + D2);
        CharacteristicEnsemble::StepStat st;
        st.t = 0.0;
        st.R = {G, Mat::Zero(D, D)};
        st.a = {ens.start.hess, Mat::Zero(D, D)};
        st.xx = {x0 * x0.transpose(), Mat::Zero(D, D)};
        ens.steps.push_back(st);
        ens.max_grad_norm = ens.start.grad.norm();
        return ens;
    }

    const double T = ens.T;
    // record times: levels plus user times
    std::vector<double> rec = sol.times;
    for (double t : opt.record_times)
        if (t > 0.0 && t < T) rec.push_back(t);
    std::sort(rec.begin(), rec.end());
    std::vector<double> recs;
    for (double t : rec)
        if (recs.empty() || t - recs.back() > 1e-12 * T) recs.push_back(t);
    recs.back() = T;
    ens.record_times = recs;

    // step plan
    const double dt = opt.dt_rel * T;
    std::vector<double> ts;
    std::vector<int> gap_of;  // gap index for the step starting at ts[m]
    std::vector<int> rec_step;
    std::vector<char> slice_pt;
    const int stride = opt.slice_stride > 0 ? opt.slice_stride : (D == 1 ? 1 : 8);
    for (std::size_t g = 0; g + 1 < recs.size(); ++g) {
        const double a = recs[g], b = recs[g + 1];
        const int n = opt.gap_steps > 0 ? opt.gap_steps
                                        : std::max(1, static_cast<int>(std::ceil((b - a) / dt - 1e-9)));
        rec_step.push_back(static_cast<int>(ts.size()));
        for (int i = 0; i < n; ++i) {
            ts.push_back(a + (b - a) * i / n);
            gap_of.push_back(static_cast<int>(g));
            slice_pt.push_back(i % stride == 0);
        }
    }
    rec_step.push_back(static_cast<int>(ts.size()));
    ts.push_back(T);
    gap_of.push_back(-1);
    slice_pt.push_back(1);
    const int M = static_cast<int>(ts.size()) - 1;

    std::vector<double> gap_alpha;
    std::vector<Mat> gap_ldot, gap_diff;
    ens.record_Ldot.push_back(Mat::Zero(D, D));
    ens.record_alpha.push_back(0.0);
    for (std::size_t g = 0; g + 1 < recs.size(); ++g) {
        const double mid = 0.5 * (recs[g] + recs[g + 1]);
        const Mat ld = sol.decomp.L.slope(mid);
        gap_ldot.push_back(ld);
        gap_alpha.push_back(sol.s_level[static_cast<std::size_t>(sol.level_of(mid))]);
        gap_diff.push_back(sqrt_psd(project_psd(2.0 * ld)));
        ens.record_Ldot.push_back(ld);
        ens.record_alpha.push_back(gap_alpha.back());
    }

    const long units = (opt.n_paths + P - 1) / P;
    ens.units = units;
    ens.paths_per_unit = P;
    ens.unit_data.assign(recs.size(), std::vector<double>(static_cast<std::size_t>(units * S), 0.0));
    if (ens.fixed_start) ens.start = sol.eval(0.0, x0);

    const long B = std::max(1, opt.block);
    const long nblocks = (units + B - 1) / B;
    std::vector<Block> blocks(static_cast<std::size_t>(nblocks));
    const Mat start_cov = x0spec.gaussian ? sqrt_psd(project_psd(2.0 * sol.decomp.L(0.0))) : Mat::Zero(D, D);
    for (long b = 0; b < nblocks; ++b) {
        Block& bl = blocks[static_cast<std::size_t>(b)];
        bl.gen.seed(stream_seed(seed, {0x63686172ULL, static_cast<std::uint64_t>(b)}));
        bl.u0 = b * B;
        bl.nu = std::min(B, units - bl.u0);
        bl.X.assign(static_cast<std::size_t>(bl.nu * P * D), 0.0);
        bl.prevA.assign(static_cast<std::size_t>(bl.nu * P * D2), 0.0);
        bl.acc.assign(static_cast<std::size_t>(bl.nu * D4), 0.0);
        bl.stat.assign(static_cast<std::size_t>(6 * D2), 0.0);
        std::normal_distribution<double> nd;
        for (long u = 0; u < bl.nu; ++u) {
            Vec eta(D);
            if (x0spec.gaussian)
                for (int a = 0; a < D; ++a) eta(a) = nd(bl.gen);
            const Vec z = start_cov * eta;
            for (int p = 0; p < P; ++p) {
                const Vec x = x0 + (p == 0 ? 1.0 : -1.0) * z;
                for (int a = 0; a < D; ++a) bl.X[static_cast<std::size_t>((u * P + p) * D + a)] = x(a);
            }
        }
    }

    // slice schedule
    auto next_slice = [&](int m) {
        int k = m + 1;
        while (k < M && !slice_pt[static_cast<std::size_t>(k)]) ++k;
        return k;
    };
    int mlo = 0, mhi = M > 0 ? next_slice(0) : 0;
    FieldGrid lo = ts[0] >= T ? terminal_slice(sol) : sol.slice(ts[0]);
    FieldGrid hi = M > 0 ? (mhi == M ? terminal_slice(sol) : sol.slice(ts[static_cast<std::size_t>(mhi)])) : lo;
    int next_rec = 0;

    for (int m = 0; m <= M; ++m) {
        if (m == mhi && m > 0) {
            lo = std::move(hi);
            mlo = m;
            if (m < M) {
                mhi = next_slice(m);
                hi = mhi == M ? terminal_slice(sol) : sol.slice(ts[static_cast<std::size_t>(mhi)]);
            }
        }
        FieldGrid blended;
        const FieldGrid* field = &lo;
        if (m != mlo) {
            const double w = (ts[static_cast<std::size_t>(m)] - ts[static_cast<std::size_t>(mlo)]) /
                             (ts[static_cast<std::size_t>(mhi)] - ts[static_cast<std::size_t>(mlo)]);
            blended = blend(lo, hi, w, ts[static_cast<std::size_t>(m)]);
            field = &blended;
        }
        const bool is_rec = next_rec < static_cast<int>(rec_step.size()) && rec_step[static_cast<std::size_t>(next_rec)] == m;
        const int r = next_rec;
        const double dt_prev = m > 0 ? ts[static_cast<std::size_t>(m)] - ts[static_cast<std::size_t>(m - 1)] : 0.0;
        const int g = m < M ? gap_of[static_cast<std::size_t>(m)] : -1;
        const double dt_m = m < M ? ts[static_cast<std::size_t>(m + 1)] - ts[static_cast<std::size_t>(m)] : 0.0;

        parallel_for(blocks.size(), [&](std::size_t bi) {
            Block& bl = blocks[bi];
            std::fill(bl.stat.begin(), bl.stat.end(), 0.0);
            std::normal_distribution<double> nd;
            // drift 2 alpha Ldot grad dt and diffusion factor, as raw column-major arrays
            std::array<double, 9> dc{}, df{};
            if (g >= 0) {
                const Mat c = 2.0 * gap_alpha[static_cast<std::size_t>(g)] * gap_ldot[static_cast<std::size_t>(g)] * dt_m;
                const Mat f = gap_diff[static_cast<std::size_t>(g)] * std::sqrt(dt_m);
                std::copy(c.data(), c.data() + D2, dc.begin());
                std::copy(f.data(), f.data() + D2, df.begin());
            }
            std::array<double, 10> fv{};
            std::array<double, 6> grads{};  // P x D
            std::array<double, 9> Gu{}, Au{}, Xu{}, A{};
            const double invP = 1.0 / P;
            for (long u = 0; u < bl.nu; ++u) {
                Gu.fill(0.0);
                Au.fill(0.0);
                Xu.fill(0.0);
                double* acc = &bl.acc[static_cast<std::size_t>(u * D4)];
                for (int p = 0; p < P; ++p) {
                    const long path = u * P + p;
                    const double* x = &bl.X[static_cast<std::size_t>(path * D)];
                    for (int c = 0; c < D; ++c)
                        if (std::abs(x[c]) > field->grid.x_max * (1.0 + 1e-12)) {
                            ++bl.escapes;
                            break;
                        }
                    field->sample_packed(x, fv.data());
                    double gn = 0.0;
                    for (int c = 0; c < D; ++c) gn += fv[static_cast<std::size_t>(1 + c)] * fv[static_cast<std::size_t>(1 + c)];
                    bl.max_grad = std::max(bl.max_grad, std::sqrt(gn));
                    for (int i = 0, h = 0; i < D; ++i)
                        for (int j = i; j < D; ++j, ++h)
                            A[static_cast<std::size_t>(j * D + i)] = A[static_cast<std::size_t>(i * D + j)] =
                                fv[static_cast<std::size_t>(1 + D + h)];
                    for (int i = 0; i < D; ++i)
                        for (int j = 0; j < D; ++j) {
                            const std::size_t k = static_cast<std::size_t>(j * D + i);
                            Gu[k] += fv[static_cast<std::size_t>(1 + i)] * fv[static_cast<std::size_t>(1 + j)] * invP;
                            Au[k] += A[k] * invP;
                            Xu[k] += x[i] * x[j] * invP;
                        }
                    double* pa = &bl.prevA[static_cast<std::size_t>(path * D2)];
                    if (m > 0) {
                        const double h = 0.5 * dt_prev * invP;
                        for (int i = 0; i < D2; ++i)
                            for (int j = 0; j < D2; ++j)
                                acc[i * D2 + j] += h * (pa[i] * pa[j] + A[static_cast<std::size_t>(i)] * A[static_cast<std::size_t>(j)]);
                    }
                    std::copy(A.begin(), A.begin() + D2, pa);
                    for (int c = 0; c < D; ++c) grads[static_cast<std::size_t>(p * D + c)] = fv[static_cast<std::size_t>(1 + c)];
                }
                if (is_rec) {
                    double* dst = &ens.unit_data[static_cast<std::size_t>(r)][static_cast<std::size_t>((bl.u0 + u) * S)];
                    std::copy(Gu.begin(), Gu.begin() + D2, dst);
                    std::copy(Au.begin(), Au.begin() + D2, dst + D2);
                    // reorder to index ((i*D + j)*D + k)*D + l for A_ij A_kl
                    for (int i = 0; i < D; ++i)
                        for (int j = 0; j < D; ++j)
                            for (int k = 0; k < D; ++k)
                                for (int l = 0; l < D; ++l)
                                    dst[2 * D2 + ((i * D + j) * D + k) * D + l] = acc[(j * D + i) * D2 + (l * D + k)];
                    std::fill(acc, acc + D4, 0.0);
                }
                for (int i = 0; i < D2; ++i) {
                    const std::size_t k = static_cast<std::size_t>(i);
                    bl.stat[k] += Gu[k];
                    bl.stat[static_cast<std::size_t>(D2) + k] += Gu[k] * Gu[k];
                    bl.stat[static_cast<std::size_t>(2 * D2) + k] += Au[k];
                    bl.stat[static_cast<std::size_t>(3 * D2) + k] += Au[k] * Au[k];
                    bl.stat[static_cast<std::size_t>(4 * D2) + k] += Xu[k];
                    bl.stat[static_cast<std::size_t>(5 * D2) + k] += Xu[k] * Xu[k];
                }
                if (g >= 0) {
                    std::array<double, 3> xi{}, noise{};
                    for (int c = 0; c < D; ++c) xi[static_cast<std::size_t>(c)] = nd(bl.gen);
                    for (int i = 0; i < D; ++i)
                        for (int j = 0; j < D; ++j)
                            noise[static_cast<std::size_t>(i)] += df[static_cast<std::size_t>(j * D + i)] * xi[static_cast<std::size_t>(j)];
                    for (int p = 0; p < P; ++p) {
                        double* x = &bl.X[static_cast<std::size_t>((u * P + p) * D)];
                        const double sg = p == 0 ? 1.0 : -1.0;
                        for (int i = 0; i < D; ++i) {
                            double d = sg * noise[static_cast<std::size_t>(i)];
                            for (int j = 0; j < D; ++j)
                                d += dc[static_cast<std::size_t>(j * D + i)] * grads[static_cast<std::size_t>(p * D + j)];
                            x[i] += d;
                        }
                    }
                }
            }
        });
        if (is_rec) ++next_rec;

        std::vector<double> tot(static_cast<std::size_t>(6 * D2), 0.0);
        for (const Block& bl : blocks)
            for (std::size_t i = 0; i < tot.size(); ++i) tot[i] += bl.stat[i];
        const double n = static_cast<double>(units);
        auto est = [&](int k) {
            MatEstimate e;
            e.mean = Mat::Zero(D, D);
            e.se = Mat::Zero(D, D);
            for (int i = 0; i < D2; ++i) {
                const double mean = tot[static_cast<std::size_t>(2 * k * D2 + i)] / n;
                const double sq = tot[static_cast<std::size_t>((2 * k + 1) * D2 + i)] / n;
                e.mean.data()[i] = mean;
                if (units > 1) e.se.data()[i] = std::sqrt(std::max(0.0, (sq - mean * mean) * n / (n - 1.0)) / n);
            }
            return e;
        };
        CharacteristicEnsemble::StepStat st;
        st.t = ts[static_cast<std::size_t>(m)];
        st.R = est(0);
        st.a = est(1);
        st.xx = est(2);
        ens.steps.push_back(std::move(st));
    }

    long escapes = 0;
    for (const Block& bl : blocks) {
        escapes += bl.escapes;
        ens.max_grad_norm = std::max(ens.max_grad_norm, bl.max_grad);
    }
    if (escapes > 0)
        throw std::runtime_error("simulate: " + std::to_string(escapes) +
                                 " path evaluations left the grid extent; re-solve with a larger x_max");
    return ens;
}

// ---------------------------------------------------------------------------

RIdentityReport check_R_identity(const CharacteristicEnsemble& ens) {
    RIdentityReport rep;
    const int D = ens.dim;
    const int nr = static_cast<int>(ens.record_times.size());
    rep.times = ens.record_times;
    auto account = [&](const MatEstimate& e) {
        for (int i = 0; i < e.mean.size(); ++i) {
            const double m = std::abs(e.mean.data()[i]), s = e.se.data()[i];
            rep.max_abs = std::max(rep.max_abs, m);
            if (m <= 1e-12) continue;
            rep.max_z = s > 0.0 ? std::max(rep.max_z, m / s) : std::numeric_limits<double>::infinity();
        }
    };
    for (int r = 0; r < nr; ++r) {
        MatEstimate e = ens.reduce([&](const CharacteristicEnsemble::UnitView& v) {
            Mat s = v.G(r) - v.G(0);
            for (int k = 1; k <= r; ++k) s -= 2.0 * v.quad(k, ens.record_Ldot[static_cast<std::size_t>(k)]);
            return s;
        });
        account(e);
        rep.residual.push_back(e);
    }
    // A_r + sum_{k <= r} alpha_k (G_k - G_{k-1}) has a constant mean in r
    auto w_of = [&](const CharacteristicEnsemble::UnitView& v, int r) {
        Mat s = v.A(r);
        for (int k = 1; k <= r; ++k) s += ens.record_alpha[static_cast<std::size_t>(k)] * (v.G(k) - v.G(k - 1));
        return s;
    };
    for (int r = 0; r < nr; ++r) {
        MatEstimate e = ens.reduce([&](const CharacteristicEnsemble::UnitView& v) {
            return Mat(w_of(v, r) - w_of(v, nr - 1));
        });
        account(e);
        rep.companion.push_back(e);
    }
    (void)D;
    return rep;
}

// ---------------------------------------------------------------------------

StepPath random_direction(const StepPath& q, std::uint64_t seed) {
    std::mt19937_64 gen(stream_seed(seed, 0x64697265ULL));
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> ud(0.2, 1.0);
    const int D = q.dim;
    StepPath d;
    d.dim = D;
    d.breakpoints = q.breakpoints;
    Mat run = Mat::Zero(D, D);
    for (std::size_t k = 0; k < q.breakpoints.size(); ++k) {
        Mat g(D, D);
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) g(i, j) = nd(gen);
        run += ud(gen) * g * g.transpose() / D;
        d.values.push_back(run);
    }
    const double n = path_distance(d, StepPath::zero(D), Norm::L1);
    for (Mat& v : d.values) v /= n;
    return d;
}

namespace {

StepPath add_scaled(const StepPath& q, const StepPath& d, double eps) {
    const auto grid = merged_breakpoints(q, d);
    StepPath a = refine(q, grid), b = refine(d, grid);
    for (std::size_t k = 0; k < a.values.size(); ++k) a.values[k] = symmetrize(a.values[k] + eps * b.values[k]);
    return a;
}

bool valid_path(const StepPath& q) {
    try {
        q.validate(0.0);
        return true;
    } catch (const std::invalid_argument&) {
        return false;
    }
}

}  // namespace

double psi_directional_fd(const SpinMeasure& mu, const StepPath& q, const StepPath& d, double eps,
                          const GridSpec& grid, bool* central) {
    const StepPath qp = add_scaled(q, d, eps);
    const StepPath qm = add_scaled(q, d, -eps);
    const GridSpec g = frozen_spec(mu, qp, grid);
    const bool c = valid_path(qm);
    if (central) *central = c;
    if (c) return (psi_value(mu, qp, g) - psi_value(mu, qm, g)) / (2.0 * eps);
    return (psi_value(mu, qp, g) - psi_value(mu, q, g)) / eps;
}

GradPsiResult grad_psi(const SpinMeasure& mu, const StepPath& q, const GradPsiOptions& opt, std::uint64_t seed) {
    q.validate();
    mu.validate();
    if (q.dim != mu.dim) throw std::invalid_argument("grad_psi: dimension mismatch");
    const int D = q.dim;
    GradPsiResult res;
    res.p_raw.dim = res.p.dim = D;
    res.p_raw.breakpoints = res.p.breakpoints = q.breakpoints;
    const std::size_t K = q.breakpoints.size();
    std::vector<int> rec_of(K, -1);
    const Decomposition dec = canonical_decomposition(q);

    if (dec.empty) {
        const FieldValue f = terminal_fields(mu, Mat::Zero(D, D), Vec::Zero(D));
        const Mat p0 = f.grad * f.grad.transpose();
        for (std::size_t k = 0; k < K; ++k) {
            res.p_raw.values.push_back(p0);
            res.se.push_back(Mat::Zero(D, D));
        }
    } else {
        const ParisiSolution sol = solve_parisi(mu, dec, opt.grid);
        res.ensemble = simulate(sol, X0Spec::fixed(Vec::Zero(D)), opt.ch, seed);
        for (std::size_t k = 0; k < K; ++k) {
            const double tau = q.values[k].trace();
            const int r = res.ensemble.record_index(tau);
            if (r < 0) throw std::logic_error("grad_psi: quantile point is not a record time");
            rec_of[k] = r;
            const MatEstimate e = res.ensemble.R_at(r);
            res.p_raw.values.push_back(e.mean);
            res.se.push_back(e.se);
        }
    }

    res.record_of_level = rec_of;

    // PSD repair of increments
    Mat run = Mat::Zero(D, D), prev = Mat::Zero(D, D);
    for (std::size_t k = 0; k < K; ++k) {
        const Mat raw = symmetrize(res.p_raw.values[k]);
        run += project_psd(symmetrize(raw - prev));
        prev = raw;
        res.p.values.push_back(run);
        res.repair = std::max(res.repair, (run - res.p_raw.values[k]).cwiseAbs().maxCoeff());
        res.max_se = std::max(res.max_se, res.se[k].maxCoeff());
    }
    res.repair_ok = res.repair <= 1e-12 || res.repair <= 3.0 * res.max_se;

    if (opt.fd_check) {
        for (int i = 0; i < opt.fd_directions; ++i) {
            FdCheck c;
            c.direction = random_direction(q, stream_seed(seed, {0x6664ULL, static_cast<std::uint64_t>(i)}));
            std::vector<double> w(K);
            for (std::size_t k = 0; k < K; ++k) w[k] = (k + 1 < K ? q.breakpoints[k + 1] : 1.0) - q.breakpoints[k];
            if (dec.empty) {
                for (std::size_t k = 0; k < K; ++k) c.predicted += w[k] * dot(res.p_raw.values[k], c.direction.values[k]);
            } else {
                const ScalarEstimate e =
                    res.ensemble.reduce_scalar([&](const CharacteristicEnsemble::UnitView& v) {
                        double s = 0.0;
                        for (std::size_t k = 0; k < K; ++k) s += w[k] * dot(v.G(rec_of[k]), c.direction.values[k]);
                        return s;
                    });
                c.predicted = e.mean;
                c.predicted_se = e.se;
            }
            c.fd = psi_directional_fd(mu, q, c.direction, opt.fd_eps, opt.grid, &c.central);
            c.tol = opt.fd_abs_tol + 3.0 * c.predicted_se;
            c.pass = std::abs(c.fd - c.predicted) <= c.tol;
            res.fd_ok = res.fd_ok && c.pass;
            res.fd.push_back(c);
        }
    }
    return res;
}

MatEstimate level_increment(const GradPsiResult& g, int k1, int k2) {
    const int r1 = g.record_of_level.at(static_cast<std::size_t>(k1));
    const int r2 = g.record_of_level.at(static_cast<std::size_t>(k2));
    if (r1 < 0 || r2 < 0) {
        const int D = g.p_raw.dim;
        return {g.p_raw.values[static_cast<std::size_t>(k2)] - g.p_raw.values[static_cast<std::size_t>(k1)],
                Mat::Zero(D, D)};
    }
    return g.ensemble.reduce([&](const CharacteristicEnsemble::UnitView& v) { return Mat(v.G(r2) - v.G(r1)); });
}

// ---------------------------------------------------------------------------

ScalarEstimate functional_derivative(const CharacteristicEnsemble& ens, const LipschitzPath& Lprime) {
    if (!ens.fixed_start) throw std::invalid_argument("functional_derivative: needs a fixed starting point");
    if (ens.decomp.empty) return {};
    const Pdf& alpha = ens.decomp.alpha;
    const Mat L0 = Lprime(0.0);
    const Mat R0 = ens.start.grad * ens.start.grad.transpose();
    const double head = -dot(L0, ens.start.hess + alpha(0.0) * R0);
    const auto pts = support_of_dalpha(alpha);
    const auto mass = dalpha_masses(alpha);
    std::vector<std::pair<int, double>> atoms;
    std::vector<Mat> lp;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (pts[i] <= 0.0) continue;  // the atom at 0 is the alpha(0) term above
        const int r = ens.record_index(pts[i]);
        if (r < 0) throw std::logic_error("functional_derivative: atom of d alpha is not a record time");
        atoms.emplace_back(r, mass[i]);
        lp.push_back(Lprime(pts[i]));
    }
    ScalarEstimate e = ens.reduce_scalar([&](const CharacteristicEnsemble::UnitView& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < atoms.size(); ++i) s -= atoms[i].second * dot(lp[i], v.G(atoms[i].first));
        return s;
    });
    e.mean += head;
    return e;
}

ScalarEstimate functional_derivative(const SpinMeasure& mu, const StepPath& q, const LipschitzPath& Lprime,
                                     const Vec& x0, const CharOptions& opt, const GridSpec& grid,
                                     std::uint64_t seed) {
    const Decomposition dec = canonical_decomposition(q);
    if (dec.empty) return {};
    const ParisiSolution sol = solve_parisi(mu, dec, grid);
    const CharacteristicEnsemble ens = simulate(sol, X0Spec::fixed(x0), opt, seed);
    return functional_derivative(ens, Lprime);
}

// ---------------------------------------------------------------------------

VEstimate v_of_q(const SpinMeasure& mu, const StepPath& q, int s_nodes, int eta_nodes, int reps,
                 std::uint64_t seed) {
    const int D = q.dim;
    const Mat q0 = q.values.front();
    VEstimate out{Mat::Zero(D, D), Mat::Zero(D, D)};
    if (q0.cwiseAbs().maxCoeff() == 0.0) return out;
    const GaussRule sr = gauss_legendre01(s_nodes);
    const TensorRule er = gauss_hermite_tensor(eta_nodes, D);
    Observable obs;
    obs.replicas = 2;
    obs.components = D * D;
    obs.f = [D](const std::vector<const Vec*>& sg, const std::vector<int>&, double* o) {
        const Vec& a = *sg[0];
        const Vec& b = *sg[1];
        for (int i = 0; i < D; ++i)
            for (int j = 0; j < D; ++j) o[i * D + j] = a(i) * a(j) - 0.5 * (a(i) * b(j) + b(i) * a(j));
    };
    Mat var = Mat::Zero(D, D);
    CascadeOptions copt;
    std::uint64_t call = 0;
    for (std::size_t si = 0; si < sr.x.size(); ++si) {
        const double s = sr.x[si];
        StepPath qs = q;
        for (Mat& v : qs.values) v = v - q0 * s;
        const Mat root = sqrt_psd(project_psd(2.0 * q0 * s));
        for (std::size_t ei = 0; ei < er.w.size(); ++ei) {
            const Vec x = root * er.points.col(static_cast<Eigen::Index>(ei));
            const GibbsEstimate g = mc_gibbs(mu, qs, x, -q0 * s, obs, reps, copt, stream_seed(seed, {call++}));
            Mat a(D, D), ase(D, D);
            for (int i = 0; i < D; ++i)
                for (int j = 0; j < D; ++j) {
                    a(i, j) = g.mean[static_cast<std::size_t>(i * D + j)];
                    ase(i, j) = g.se[static_cast<std::size_t>(i * D + j)];
                }
            const double w = sr.w[si] * er.w[ei];
            out.mean += w * a * q0 * a.transpose();
            // linearized error of a q0 a^T
            const Mat qa = q0 * a.transpose(), aq = a * q0;
            for (int i = 0; i < D; ++i)
                for (int j = 0; j < D; ++j) {
                    double v = 0.0;
                    for (int k = 0; k < D; ++k)
                        for (int l = 0; l < D; ++l) {
                            const double dd = (i == k ? qa(l, j) : 0.0) + (j == k ? aq(i, l) : 0.0);
                            v += dd * dd * ase(k, l) * ase(k, l);
                        }
                    var(i, j) += w * w * v;
                }
        }
    }
    out.se = var.cwiseSqrt();
    return out;
}

LeftEndpointReport left_endpoint_check(const SpinMeasure& mu, const StepPath& q, const GradPsiOptions& opt,
                                       int reps, std::uint64_t seed) {
    const int D = q.dim;
    LeftEndpointReport rep;
    GradPsiOptions o = opt;
    o.fd_check = false;
    const GradPsiResult g = grad_psi(mu, q, o, seed);
    rep.p0 = g.p_raw.values.front();
    rep.p0_se = g.se.front();

    Observable obs;
    obs.replicas = 1;
    obs.components = D;
    obs.f = [D](const std::vector<const Vec*>& sg, const std::vector<int>&, double* out) {
        for (int i = 0; i < D; ++i) out[i] = (*sg[0])(i);
    };
    const GibbsEstimate m = mc_gibbs(mu, q, Vec::Zero(D), Mat::Zero(D, D), obs, reps, CascadeOptions{},
                                     stream_seed(seed, 0x6d6167ULL));
    rep.magnetization = Mat(D, 1);
    rep.magnetization_se = Mat(D, 1);
    for (int i = 0; i < D; ++i) {
        rep.magnetization(i, 0) = m.mean[static_cast<std::size_t>(i)];
        rep.magnetization_se(i, 0) = m.se[static_cast<std::size_t>(i)];
    }
    rep.mm = rep.magnetization * rep.magnetization.transpose();
    const VEstimate v = v_of_q(mu, q, 6, D == 1 ? 8 : 4, std::max(20, reps / 4), stream_seed(seed, 0x76ULL));
    rep.V = v.mean;
    rep.V_se = v.se;
    rep.rhs = rep.mm + 2.0 * rep.V;
    rep.rhs_se = Mat::Zero(D, D);
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const double mi = rep.magnetization(i, 0), mj = rep.magnetization(j, 0);
            const double si = rep.magnetization_se(i, 0), sj = rep.magnetization_se(j, 0);
            const double mm_var = mj * mj * si * si + mi * mi * sj * sj + si * si * sj * sj;
            rep.rhs_se(i, j) = std::sqrt(mm_var + 4.0 * v.se(i, j) * v.se(i, j));
        }
    rep.max_z = 0.0;
    for (int i = 0; i < D; ++i)
        for (int j = 0; j < D; ++j) {
            const double diff = std::abs(rep.p0(i, j) - rep.rhs(i, j));
            const double s = std::hypot(rep.p0_se(i, j), rep.rhs_se(i, j));
            // agreement to round-off is exact regardless of the Monte Carlo error
            const double z = diff <= 1e-12 ? 0.0 : (s > 0.0 ? diff / s : std::numeric_limits<double>::infinity());
            rep.max_z = std::max(rep.max_z, z);
        }
    rep.pass = rep.max_z < 3.0;
    return rep;
}

}  // namespace parisi
