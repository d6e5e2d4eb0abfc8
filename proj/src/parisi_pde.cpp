#include "parisi/parisi_pde.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "parisi/parallel.hpp"
#include "parisi/quadrature.hpp"

namespace parisi {

namespace {

constexpr double kPlainExpectationLevel = 1e-8;

int hess_index(int D, int i, int j) {
    if (i > j) std::swap(i, j);
    // row-major upper triangle
    return i * D - i * (i - 1) / 2 + (j - i);
}

void pack(const FieldValue& v, int D, double* out) {
    out[0] = v.value;
    for (int a = 0; a < D; ++a) out[1 + a] = v.grad(a);
    for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j) out[1 + D + hess_index(D, i, j)] = v.hess(i, j);
}

FieldValue unpack(const double* in, int D) {
    FieldValue v;
    v.value = in[0];
    v.grad.resize(D);
    v.hess.resize(D, D);
    for (int a = 0; a < D; ++a) v.grad(a) = in[1 + a];
    for (int i = 0; i < D; ++i)
        for (int j = i; j < D; ++j) v.hess(i, j) = v.hess(j, i) = in[1 + D + hess_index(D, i, j)];
    return v;
}

// Cubic Lagrange weights on nodes -1, 0, 1, 2 at offset f.
std::array<double, 4> lagrange4(double f) {
    return {-f * (f - 1.0) * (f - 2.0) / 6.0, (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
            -(f + 1.0) * f * (f - 2.0) / 2.0, (f + 1.0) * f * (f - 1.0) / 6.0};
}

bool is_zero_matrix(const Mat& c) { return c.size() == 0 || c.cwiseAbs().maxCoeff() <= 1e-300; }

// Either the closed-form terminal condition or a stored grid.
struct Source {
    const SpinMeasure* mu = nullptr;
    Mat LT;
    const FieldGrid* grid = nullptr;

    FieldValue at(const Vec& y) const { return grid ? grid->sample(y) : terminal_fields(*mu, LT, y); }
};

struct ExtBox {
    int D;
    std::array<long, 3> n{1, 1, 1}, pad{0, 0, 0}, stride{1, 1, 1};
    long size() const { return n[0] * n[1] * n[2]; }
};

// Applies out[i] = sum_taps w * in[i + off] on the index box [lo, hi] (inclusive).
void apply_stencil(const ExtBox& box, int F, const std::vector<std::pair<long, double>>& taps,
                   const std::vector<double>& in, std::vector<double>& out, const std::array<long, 3>& lo,
                   const std::array<long, 3>& hi) {
    const long rows1 = hi[1] - lo[1] + 1, rows2 = hi[2] - lo[2] + 1;
    const std::size_t nrows = static_cast<std::size_t>(rows1 * rows2);
    parallel_for(nrows, [&](std::size_t r) {
        const long i1 = lo[1] + static_cast<long>(r) % rows1;
        const long i2 = lo[2] + static_cast<long>(r) / rows1;
        std::array<double, 32> acc;
        for (long i0 = lo[0]; i0 <= hi[0]; ++i0) {
            const long idx = i0 + i1 * box.stride[1] + i2 * box.stride[2];
            std::fill(acc.begin(), acc.begin() + F, 0.0);
            for (const auto& [off, w] : taps) {
                const double* src = &in[static_cast<std::size_t>((idx + off) * F)];
                for (int f = 0; f < F; ++f) acc[static_cast<std::size_t>(f)] += w * src[f];
            }
            double* dst = &out[static_cast<std::size_t>(idx * F)];
            for (int f = 0; f < F; ++f) dst[f] = acc[static_cast<std::size_t>(f)];
        }
    });
}

// Fields at time t_out on `grid` given the source at the level above, the level s and the
// covariance C = 2 (L(r_above) - L(t_out)) of the Gaussian increment.
FieldGrid convolve_level(const Grid& grid, const Source& src, double s, const Mat& C, int gh, double t_out) {
    const int D = grid.dim;
    const int W = field_width(D);
    FieldGrid outg;
    outg.t = t_out;
    outg.grid = grid;
    outg.data.assign(static_cast<std::size_t>(grid.size() * W), 0.0);

    if (is_zero_matrix(C)) {
        parallel_for(static_cast<std::size_t>(grid.size()), [&](std::size_t flat) {
            Vec y(D);
            long r = static_cast<long>(flat);
            for (int a = 0; a < D; ++a) {
                y(a) = grid.coord(static_cast<int>(r % grid.n));
                r /= grid.n;
            }
            pack(src.at(y), D, &outg.data[flat * static_cast<std::size_t>(W)]);
        });
        return outg;
    }

    const Mat S = cholesky_psd(C);
    const GaussRule rule = gauss_hermite(gh);
    double xi_max = 0.0;
    for (double x : rule.x) xi_max = std::max(xi_max, std::abs(x));

    // reach[k][a]: cells touched along axis a by stage k
    std::array<std::array<long, 3>, 3> reach{};
    for (int k = 0; k < D; ++k)
        for (int a = 0; a < D; ++a)
            reach[k][a] = S(a, k) == 0.0 ? 0 : static_cast<long>(std::ceil(xi_max * std::abs(S(a, k)) / grid.h)) + 2;

    ExtBox box;
    box.D = D;
    for (int a = 0; a < D; ++a) {
        long p = 0;
        for (int k = 0; k < D; ++k) p += reach[k][a];
        box.pad[a] = p;
        box.n[a] = grid.n + 2 * p;
    }
    box.stride = {1, box.n[0], box.n[0] * box.n[1]};

    const bool tilted = s >= kPlainExpectationLevel;
    const int nh = D * (D + 1) / 2;
    const int FL = tilted ? 1 + D + 2 * nh : 1 + D + nh;

    // Source fields on the extended box.
    std::vector<double> raw(static_cast<std::size_t>(box.size() * W));
    parallel_for(static_cast<std::size_t>(box.size()), [&](std::size_t flat) {
        Vec y(D);
        long r = static_cast<long>(flat);
        for (int a = 0; a < D; ++a) {
            y(a) = grid.coord(static_cast<int>(r % box.n[a] - box.pad[a]));
            r /= box.n[a];
        }
        pack(src.at(y), D, &raw[flat * static_cast<std::size_t>(W)]);
    });

    double phi_max = -std::numeric_limits<double>::infinity(), phi_min = -phi_max;
    for (long i = 0; i < box.size(); ++i) {
        phi_max = std::max(phi_max, raw[static_cast<std::size_t>(i * W)]);
        phi_min = std::min(phi_min, raw[static_cast<std::size_t>(i * W)]);
    }
    if (tilted && s * (phi_max - phi_min) > 650.0)
        throw std::runtime_error("solve_parisi: dynamic range of exp(s Phi) exceeds double precision; reduce x_max");

    std::vector<double> a_buf(static_cast<std::size_t>(box.size() * FL)), b_buf(a_buf.size(), 0.0);
    for (long i = 0; i < box.size(); ++i) {
        const double* r = &raw[static_cast<std::size_t>(i * W)];
        double* o = &a_buf[static_cast<std::size_t>(i * FL)];
        if (!tilted) {
            for (int f = 0; f < W; ++f) o[f] = r[f];
            continue;
        }
        const double u = std::exp(s * (r[0] - phi_max));
        o[0] = u;
        for (int a = 0; a < D; ++a) o[1 + a] = u * r[1 + a];
        for (int i1 = 0; i1 < D; ++i1)
            for (int j1 = i1; j1 < D; ++j1) {
                const int hidx = hess_index(D, i1, j1);
                o[1 + D + hidx] = u * r[1 + D + hidx];
                o[1 + D + nh + hidx] = u * r[1 + i1] * r[1 + j1];
            }
    }
    raw.clear();
    raw.shrink_to_fit();

    for (int k = D - 1; k >= 0; --k) {
        bool any = false;
        for (int a = 0; a < D; ++a) any = any || S(a, k) != 0.0;
        if (!any) continue;
        std::map<long, double> tapmap;
        for (std::size_t i = 0; i < rule.x.size(); ++i) {
            std::array<std::array<long, 4>, 3> off{};
            std::array<std::array<double, 4>, 3> wt{};
            std::array<int, 3> cnt{1, 1, 1};
            for (int a = 0; a < D; ++a) {
                if (S(a, k) == 0.0) {
                    off[a][0] = 0;
                    wt[a][0] = 1.0;
                    cnt[a] = 1;
                    continue;
                }
                const double d = rule.x[i] * S(a, k) / grid.h;
                const double base = std::floor(d);
                const auto lw = lagrange4(d - base);
                for (int m = 0; m < 4; ++m) {
                    off[a][m] = static_cast<long>(base) - 1 + m;
                    wt[a][m] = lw[static_cast<std::size_t>(m)];
                }
                cnt[a] = 4;
            }
            for (int m0 = 0; m0 < cnt[0]; ++m0)
                for (int m1 = 0; m1 < (D > 1 ? cnt[1] : 1); ++m1)
                    for (int m2 = 0; m2 < (D > 2 ? cnt[2] : 1); ++m2) {
                        double w = rule.w[i] * wt[0][m0];
                        long o = off[0][m0];
                        if (D > 1) {
                            w *= wt[1][m1];
                            o += off[1][m1] * box.stride[1];
                        }
                        if (D > 2) {
                            w *= wt[2][m2];
                            o += off[2][m2] * box.stride[2];
                        }
                        tapmap[o] += w;
                    }
        }
        std::vector<std::pair<long, double>> taps(tapmap.begin(), tapmap.end());
        std::array<long, 3> lo{0, 0, 0}, hi{0, 0, 0};
        for (int a = 0; a < D; ++a) {
            long r = 0;
            for (int k2 = 0; k2 < k; ++k2) r += reach[k2][a];
            lo[a] = box.pad[a] - r;
            hi[a] = box.pad[a] + grid.n - 1 + r;
        }
        apply_stencil(box, FL, taps, a_buf, b_buf, lo, hi);
        std::swap(a_buf, b_buf);
    }

    parallel_for(static_cast<std::size_t>(grid.size()), [&](std::size_t flat) {
        long r = static_cast<long>(flat);
        long e = 0;
        for (int a = 0; a < D; ++a) {
            e += (r % grid.n + box.pad[a]) * box.stride[a];
            r /= grid.n;
        }
        const double* c = &a_buf[static_cast<std::size_t>(e * FL)];
        double* o = &outg.data[flat * static_cast<std::size_t>(W)];
        if (!tilted) {
            for (int f = 0; f < W; ++f) o[f] = c[f];
            return;
        }
        const double U = c[0];
        if (!(U > 0.0) || !std::isfinite(U))
            throw std::runtime_error("solve_parisi: Gaussian convolution lost all mass; grid extent too small");
        o[0] = phi_max + std::log(U) / s;
        for (int a = 0; a < D; ++a) o[1 + a] = c[1 + a] / U;
        for (int i1 = 0; i1 < D; ++i1)
            for (int j1 = i1; j1 < D; ++j1) {
                const int hidx = hess_index(D, i1, j1);
                o[1 + D + hidx] = c[1 + D + hidx] / U + s * (c[1 + D + nh + hidx] / U - o[1 + i1] * o[1 + j1]);
            }
    });
    return outg;
}

}  // namespace

// ---------------------------------------------------------------------------

long Grid::size() const {
    long s = 1;
    for (int a = 0; a < dim; ++a) s *= n;
    return s;
}

bool Grid::contains(const Vec& x, double slack) const {
    for (int a = 0; a < dim; ++a)
        if (std::abs(x(a)) > x_max * (1.0 + slack)) return false;
    return true;
}

int field_width(int dim) { return 1 + dim + dim * (dim + 1) / 2; }

namespace {

struct Stencil {
    std::array<int, 3> base{0, 0, 0};
    std::array<std::array<double, 4>, 3> w{};
};

Stencil make_stencil(const Grid& g, const Vec& b) {
    Stencil st;
    for (int a = 0; a < g.dim; ++a) {
        const double p = (b(a) + g.x_max) / g.h;
        int base = static_cast<int>(std::floor(p));
        base = std::clamp(base, 1, g.n - 3);
        st.base[a] = base;
        st.w[a] = lagrange4(p - base);
    }
    return st;
}

// Projects x onto the grid box.
Vec clamp_to_box(const Grid& g, const Vec& x) {
    Vec b = x;
    for (int a = 0; a < g.dim; ++a) b(a) = std::clamp(x(a), -g.x_max, g.x_max);
    return b;
}

}  // namespace

FieldValue FieldGrid::node(long flat) const {
    const int W = field_width(grid.dim);
    return unpack(&data[static_cast<std::size_t>(flat * W)], grid.dim);
}

FieldValue FieldGrid::sample(const Vec& x) const {
    const int D = grid.dim, W = field_width(D);
    const Vec b = clamp_to_box(grid, x);
    const Stencil st = make_stencil(grid, b);
    std::array<double, 16> acc{};
    const int c1 = D > 1 ? 4 : 1, c2 = D > 2 ? 4 : 1;
    for (int m2 = 0; m2 < c2; ++m2)
        for (int m1 = 0; m1 < c1; ++m1) {
            double w12 = 1.0;
            long row = 0;
            if (D > 1) {
                w12 *= st.w[1][m1];
                row += static_cast<long>(st.base[1] - 1 + m1) * grid.n;
            }
            if (D > 2) {
                w12 *= st.w[2][m2];
                row += static_cast<long>(st.base[2] - 1 + m2) * grid.n * grid.n;
            }
            for (int m0 = 0; m0 < 4; ++m0) {
                const double w = w12 * st.w[0][m0];
                const double* p = &data[static_cast<std::size_t>((row + st.base[0] - 1 + m0) * W)];
                for (int f = 0; f < W; ++f) acc[static_cast<std::size_t>(f)] += w * p[f];
            }
        }
    FieldValue v = unpack(acc.data(), D);
    if ((x - b).squaredNorm() > 0.0) v.value += v.grad.dot(x - b);
    return v;
}

Vec FieldGrid::sample_grad(const Vec& x) const { return sample(x).grad; }

void FieldGrid::sample_packed(const double* x, double* out) const {
    const int D = grid.dim, W = field_width(D);
    std::array<double, 3> b{}, off{};
    std::array<int, 3> base{};
    std::array<std::array<double, 4>, 3> w{};
    bool outside = false;
    for (int a = 0; a < D; ++a) {
        b[a] = std::clamp(x[a], -grid.x_max, grid.x_max);
        off[a] = x[a] - b[a];
        outside = outside || off[a] != 0.0;
        const double p = (b[a] + grid.x_max) / grid.h;
        base[a] = std::clamp(static_cast<int>(std::floor(p)), 1, grid.n - 3);
        w[a] = lagrange4(p - base[a]);
    }
    for (int f = 0; f < W; ++f) out[f] = 0.0;
    const int c1 = D > 1 ? 4 : 1, c2 = D > 2 ? 4 : 1;
    for (int m2 = 0; m2 < c2; ++m2)
        for (int m1 = 0; m1 < c1; ++m1) {
            double w12 = 1.0;
            long row = 0;
            if (D > 1) {
                w12 *= w[1][m1];
                row += static_cast<long>(base[1] - 1 + m1) * grid.n;
            }
            if (D > 2) {
                w12 *= w[2][m2];
                row += static_cast<long>(base[2] - 1 + m2) * grid.n * grid.n;
            }
            for (int m0 = 0; m0 < 4; ++m0) {
                const double wt = w12 * w[0][m0];
                const double* p = &data[static_cast<std::size_t>((row + base[0] - 1 + m0) * W)];
                for (int f = 0; f < W; ++f) out[f] += wt * p[f];
            }
        }
    if (outside)
        for (int a = 0; a < D; ++a) out[0] += out[1 + a] * off[a];
}

// ---------------------------------------------------------------------------

FieldValue terminal_fields(const SpinMeasure& mu, const Mat& LT, const Vec& x) {
    const int D = mu.dim;
    const std::size_t n = mu.atoms.size();
    std::array<double, 64> ebuf;
    std::vector<double> evec;
    double* e = ebuf.data();
    if (n > ebuf.size()) {
        evec.resize(n);
        e = evec.data();
    }
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec& s = mu.atoms[i];
        e[i] = std::log(mu.weights[i]) + s.dot(x) - s.dot(LT * s);
        m = std::max(m, e[i]);
    }
    double z = 0.0;
    FieldValue v;
    v.grad = Vec::Zero(D);
    v.hess = Mat::Zero(D, D);
    for (std::size_t i = 0; i < n; ++i) {
        e[i] = std::exp(e[i] - m);
        z += e[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double w = e[i] / z;
        v.grad += w * mu.atoms[i];
        v.hess += w * mu.atoms[i] * mu.atoms[i].transpose();
    }
    v.hess -= v.grad * v.grad.transpose();
    v.value = m + std::log(z);
    return v;
}

double terminal_condition(const SpinMeasure& mu, const Mat& LT, const Vec& x) {
    double m = -std::numeric_limits<double>::infinity();
    std::vector<double> e(mu.atoms.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
        const Vec& s = mu.atoms[i];
        e[i] = std::log(mu.weights[i]) + s.dot(x) - s.dot(LT * s);
        m = std::max(m, e[i]);
    }
    double z = 0.0;
    for (double v : e) z += std::exp(v - m);
    return m + std::log(z);
}

double default_extent(const SpinMeasure& mu, const Mat& LT) {
    const double lmax = std::max(0.0, max_eigenvalue(LT));
    return mu.max_norm() * 2.0 * (2.0 * LT.trace()) + 8.0 * std::sqrt(2.0 * lmax);
}

// ---------------------------------------------------------------------------

int ParisiSolution::level_of(double t) const {
    const int n = static_cast<int>(times.size()) - 1;
    if (n <= 0) return 0;
    auto it = std::upper_bound(times.begin(), times.end(), t);
    int j = it == times.begin() ? 0 : static_cast<int>(it - times.begin()) - 1;
    return std::min(j, n - 1);
}

namespace {

Source source_above(const ParisiSolution& sol, int j) {
    Source src;
    const int n = static_cast<int>(sol.times.size()) - 1;
    if (j + 1 >= n) {
        src.mu = &sol.mu;
        src.LT = sol.L_at.back();
    } else {
        src.grid = &sol.grids[static_cast<std::size_t>(j + 1)];
    }
    return src;
}

}  // namespace

FieldValue ParisiSolution::eval(double t, const Vec& x) const {
    const double T = this->T();
    if (!(t >= 0.0 && t <= T * (1.0 + 1e-14))) throw std::invalid_argument("eval_solution: t outside [0,T]");
    if (x.size() != dim()) throw std::invalid_argument("eval_solution: dimension mismatch");
    if (times.size() < 2 || t >= T) return terminal_fields(mu, decomp.L(T), x);
    const int j = level_of(t);
    if (j + 2 < static_cast<int>(times.size()) && !grid.contains(x))
        throw std::out_of_range("eval_solution: x outside the grid extent");
    const Source src = source_above(*this, j);
    const Mat C = 2.0 * (L_at[static_cast<std::size_t>(j + 1)] - decomp.L(t));
    if (is_zero_matrix(C) || C.trace() <= 0.0) return src.at(x);

    const int D = dim();
    const double s = s_level[static_cast<std::size_t>(j)];
    const Mat R = sqrt_psd(project_psd(C));
    const TensorRule rule = gauss_hermite_tensor(spec.gh_nodes, D);
    const long N = static_cast<long>(rule.w.size());
    std::vector<FieldValue> vals(static_cast<std::size_t>(N));
    double m = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < N; ++i) {
        vals[static_cast<std::size_t>(i)] = src.at(x + R * rule.points.col(i));
        m = std::max(m, vals[static_cast<std::size_t>(i)].value);
    }
    const bool tilted = s >= kPlainExpectationLevel;
    double z = 0.0;
    FieldValue out;
    out.grad = Vec::Zero(D);
    out.hess = Mat::Zero(D, D);
    Mat gg = Mat::Zero(D, D);
    double mean_phi = 0.0;
    for (long i = 0; i < N; ++i) {
        const FieldValue& v = vals[static_cast<std::size_t>(i)];
        const double w = rule.w[static_cast<std::size_t>(i)] * (tilted ? std::exp(s * (v.value - m)) : 1.0);
        z += w;
        mean_phi += w * v.value;
        out.grad += w * v.grad;
        out.hess += w * v.hess;
        gg += w * v.grad * v.grad.transpose();
    }
    out.grad /= z;
    out.hess /= z;
    if (tilted) {
        out.value = m + std::log(z) / s;
        out.hess += s * (gg / z - out.grad * out.grad.transpose());
    } else {
        out.value = mean_phi / z;
    }
    return out;
}

FieldGrid ParisiSolution::slice(double t, int gh_nodes) const {
    const int gh = gh_nodes > 0 ? gh_nodes : spec.gh_nodes;
    if (times.size() < 2) throw std::logic_error("slice: solution has no time extent");
    const int j = level_of(t);
    const Source src = source_above(*this, j);
    if (t >= T()) {
        Source term;
        term.mu = &mu;
        term.LT = L_at.back();
        return convolve_level(grid, term, 0.0, Mat::Zero(dim(), dim()), gh, t);
    }
    const Mat C = project_psd(2.0 * (L_at[static_cast<std::size_t>(j + 1)] - decomp.L(t)));
    return convolve_level(grid, src, s_level[static_cast<std::size_t>(j)], C, gh, t);
}

ParisiSolution solve_parisi(const SpinMeasure& mu, const Decomposition& decomp, const GridSpec& spec) {
    mu.validate();
    ParisiSolution sol;
    sol.mu = mu;
    sol.decomp = decomp;
    sol.spec = spec;
    const int D = mu.dim;
    if (!decomp.empty && decomp.L.dim() != D) throw std::invalid_argument("solve_parisi: dimension mismatch");
    if (sol.spec.gh_nodes <= 0) sol.spec.gh_nodes = default_gh_nodes(D);
    if (decomp.empty) {
        sol.times = {0.0};
        sol.L_at = {Mat::Zero(D, D)};
        sol.s_level = {1.0};
        return sol;
    }
    decomp.alpha.validate();
    if (!decomp.L.increasing()) throw std::invalid_argument("solve_parisi: L must be increasing");
    const double T = decomp.alpha.T();
    if (!(T > 0.0)) throw std::invalid_argument("solve_parisi: T must be positive");

    std::vector<double> ts = decomp.alpha.t;
    ts.push_back(T);
    for (double k : decomp.L.knots)
        if (k > 0.0 && k < T) ts.push_back(k);
    std::sort(ts.begin(), ts.end());
    for (double x : ts)
        if (sol.times.empty() || x - sol.times.back() > 1e-12 * T) sol.times.push_back(x);
    sol.times.back() = T;
    if (sol.times.size() < 2) sol.times = {0.0, T};
    const std::size_t n = sol.times.size() - 1;
    for (std::size_t j = 0; j <= n; ++j) sol.L_at.push_back(decomp.L(sol.times[j]));
    for (std::size_t j = 0; j < n; ++j) sol.s_level.push_back(decomp.alpha(0.5 * (sol.times[j] + sol.times[j + 1])));

    if (D > 3) throw std::invalid_argument("solve_parisi: tensor quadrature supports D <= 3");
    if (sol.spec.cells < 2) throw std::invalid_argument("solve_parisi: need at least 2 cells per half-axis");
    if (sol.spec.x_max <= 0.0) sol.spec.x_max = std::max(default_extent(mu, sol.L_at.back()), 1e-6);
    sol.grid.dim = D;
    sol.grid.n = 2 * sol.spec.cells + 1;
    sol.grid.x_max = sol.spec.x_max;
    sol.grid.h = sol.spec.x_max / sol.spec.cells;

    sol.grids.resize(n + 1);
    for (std::size_t j = n - 1; j >= 1; --j) {
        const Source src = source_above(sol, static_cast<int>(j));
        const Mat C = project_psd(2.0 * (sol.L_at[j + 1] - sol.L_at[j]));
        sol.grids[j] = convolve_level(sol.grid, src, sol.s_level[j], C, sol.spec.gh_nodes, sol.times[j]);
    }
    return sol;
}

Mat eval_solution(const ParisiSolution& sol, double t, const Vec& x, What what) {
    const FieldValue v = sol.eval(t, x);
    switch (what) {
        case What::Value: return Mat::Constant(1, 1, v.value);
        case What::Grad: return v.grad;
        case What::Hess: return v.hess;
    }
    return {};
}

double pde_residual(const ParisiSolution& sol, double t, const Vec& x) {
    if (sol.times.size() < 2) {
        return 0.0;
    }
    const int j = sol.level_of(t);
    const double lo = sol.times[static_cast<std::size_t>(j)], hi = sol.times[static_cast<std::size_t>(j + 1)];
    const double delta = 1e-5 * (hi - lo);
    if (!(t - lo > 2.0 * delta && hi - t > 2.0 * delta))
        throw std::invalid_argument("pde_residual: t must lie strictly inside a level interval");
    const double dphi = (sol.eval(t + delta, x).value - sol.eval(t - delta, x).value) / (2.0 * delta);
    const FieldValue v = sol.eval(t, x);
    const Mat Ldot = sol.decomp.L.slope(t);
    const double a = sol.s_level[static_cast<std::size_t>(j)];
    return std::abs(dphi + dot(Ldot, v.hess + a * v.grad * v.grad.transpose()));
}

GridSpec frozen_spec(const SpinMeasure& mu, const StepPath& q, const GridSpec& spec) {
    GridSpec g = spec;
    if (g.gh_nodes <= 0) g.gh_nodes = default_gh_nodes(mu.dim);
    if (g.x_max <= 0.0) g.x_max = std::max(default_extent(mu, q.values.back()), 1e-6);
    return g;
}

double psi_value(const SpinMeasure& mu, const StepPath& q, const GridSpec& spec) {
    const Decomposition d = canonical_decomposition(q);
    if (d.empty) return 0.0 - std::log(mu.mass());  // 0.0 - 0.0 is +0
    const ParisiSolution sol = solve_parisi(mu, d, spec);
    return -sol.eval(0.0, Vec::Zero(mu.dim)).value;
}

}  // namespace parisi
