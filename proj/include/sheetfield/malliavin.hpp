#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/drift.hpp"
#include "sheetfield/sheet.hpp"
#include "sheetfield/solver.hpp"
#include "sheetfield/stats.hpp"
#include "sheetfield/stochastic.hpp"

namespace sheetfield {

enum class MalliavinRegime { Bounded, SmallTime };

/// Derivative field D_{r,u}X_{s,t} for one base node (r,u): a d x d matrix
/// per node, identity on the lines s = r and t = u, zero below them.
/// Entry (a, b) is the response of component b to a noise bump in
/// direction a.
struct MalliavinField {
    GridSpec grid;
    int base_i = 0, base_j = 0;
    int level = 1;  // smoothing level of the drift that produced it
    MalliavinRegime regime = MalliavinRegime::Bounded;
    double tau = 1.0;  // horizon in the SmallTime regime
    std::vector<double> values;  // node-major, d*d per node

    std::size_t at(int i, int j, int a, int b) const {
        const int d = grid.d;
        return (static_cast<std::size_t>(i) * (grid.n_t + 1) + j) *
                   (static_cast<std::size_t>(d) * d) +
               static_cast<std::size_t>(a) * d + b;
    }

    double operator()(int i, int j, int a, int b) const { return values[at(i, j, a, b)]; }

    /// Max-norm of the matrix at one node.
    double max_norm(int i, int j) const {
        const int d = grid.d;
        double m = 0.0;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) m = std::max(m, std::fabs((*this)(i, j, a, b)));
        return m;
    }
};

/// Per-node gradient data of a smoothed drift along a solution field:
/// grad[(i,j)] = grad b_n(s_i, t_j, X(i,j)) (d x d, row = derivative axis)
/// and entry_sum[(i,j)] = sum of all entries of grad hat + grad check, the
/// driver of the pathwise exponential bound. Computing this once per path
/// is what makes sweeping many base points cheap.
struct GradientField {
    GridSpec grid;
    int level = 1;
    std::vector<double> grad;
    std::vector<double> entry_sum;

    const double* at(int i, int j) const {
        const int d = grid.d;
        return &grad[(static_cast<std::size_t>(i) * (grid.n_t + 1) + j) *
                     (static_cast<std::size_t>(d) * d)];
    }
    double sum_at(int i, int j) const {
        return entry_sum[static_cast<std::size_t>(i) * (grid.n_t + 1) + j];
    }
};

inline GradientField gradient_field(const SmoothedDrift& sd, const SolutionField& x) {
    const GridSpec& g = x.grid;
    if (g.d != sd.dim()) throw std::invalid_argument("gradient_field: dimension mismatch");
    GradientField out;
    out.grid = g;
    out.level = sd.level();
    const int d = g.d;
    out.grad.resize(g.node_count() * d * d);
    out.entry_sum.resize(g.node_count());
    std::vector<double> xv(d), gm(static_cast<std::size_t>(d) * d), gs(static_cast<std::size_t>(d) * d);
    for (int i = 0; i <= g.n_s; ++i) {
        for (int j = 0; j <= g.n_t; ++j) {
            for (int c = 0; c < d; ++c) xv[c] = x(i, j, c);
            sd.grad(g.s(i), g.t(j), xv, gm);
            sd.grad_sum(g.s(i), g.t(j), xv, gs);
            double* dst = &out.grad[(static_cast<std::size_t>(i) * (g.n_t + 1) + j) *
                                    (static_cast<std::size_t>(d) * d)];
            std::copy(gm.begin(), gm.end(), dst);
            double acc = 0.0;
            for (double v : gs) acc += v;
            out.entry_sum[static_cast<std::size_t>(i) * (g.n_t + 1) + j] = acc;
        }
    }
    return out;
}

/// Goursat sweep of the linear derivative equation
///   D(i+1,j+1) = D(i+1,j) + D(i,j+1) - D(i,j) + D(i,j) grad b_n(X(i,j)) dA
/// with boundary_scale * identity on the lines through the base node. The
/// recursion is linear, so the whole field scales with the boundary.
inline MalliavinField malliavin_derivative(const GradientField& gf, int base_i, int base_j,
                                           double boundary_scale = 1.0) {
    const GridSpec& g = gf.grid;
    if (base_i < 0 || base_i > g.n_s || base_j < 0 || base_j > g.n_t)
        throw std::invalid_argument("malliavin_derivative: base node outside the grid");
    const int d = g.d;
    MalliavinField out;
    out.grid = g;
    out.base_i = base_i;
    out.base_j = base_j;
    out.level = gf.level;
    out.values.assign(g.node_count() * d * d, 0.0);
    for (int i = base_i; i <= g.n_s; ++i)
        for (int a = 0; a < d; ++a) out.values[out.at(i, base_j, a, a)] = boundary_scale;
    for (int j = base_j; j <= g.n_t; ++j)
        for (int a = 0; a < d; ++a) out.values[out.at(base_i, j, a, a)] = boundary_scale;

    const double area = g.cell_area();
    std::vector<double> prod(static_cast<std::size_t>(d) * d);
    for (int i = base_i; i < g.n_s; ++i) {
        for (int j = base_j; j < g.n_t; ++j) {
            const double* gm = gf.at(i, j);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    double acc = 0.0;
                    for (int k = 0; k < d; ++k)
                        acc += out.values[out.at(i, j, a, k)] * gm[static_cast<std::size_t>(k) * d + b];
                    prod[static_cast<std::size_t>(a) * d + b] = acc;
                }
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    const double val = out.values[out.at(i + 1, j, a, b)] +
                                       out.values[out.at(i, j + 1, a, b)] -
                                       out.values[out.at(i, j, a, b)] +
                                       prod[static_cast<std::size_t>(a) * d + b] * area;
                    if (!std::isfinite(val)) throw DivergenceError(i + 1, j + 1);
                    out.values[out.at(i + 1, j + 1, a, b)] = val;
                }
        }
    }
    return out;
}

inline MalliavinField malliavin_derivative(const SmoothedDrift& sd, const SolutionField& x,
                                           double r, double u) {
    const GradientField gf = gradient_field(sd, x);
    return malliavin_derivative(gf, x.grid.snap_s(r), x.grid.snap_t(u));
}

/// Max over nodes of ||D|| / exp(cumulative sum of the nonnegative gradient
/// entries over [r,s] x [u,t]); at most 1 + quadrature noise by the discrete
/// analogue of the exponential bound.
inline double pathwise_bound_ratio(const MalliavinField& df, const GradientField& gf) {
    const GridSpec& g = df.grid;
    if (!g.same_lattice(gf.grid)) throw std::invalid_argument("pathwise_bound_ratio: grid mismatch");
    const double area = g.cell_area();
    double worst = 0.0;
    std::vector<double> col(g.n_t + 1, 0.0);  // cumulative sum over the sub-rectangle
    for (int i = df.base_i; i <= g.n_s; ++i) {
        double run = 0.0;
        for (int j = df.base_j; j <= g.n_t; ++j) {
            // col[j] = sum over cells [base_i, i) x [base_j, j)
            if (i > df.base_i && j > df.base_j) {
                run += std::max(0.0, gf.sum_at(i - 1, j - 1)) * area;
                col[j] += run;
            }
            worst = std::max(worst, df.max_norm(i, j) / std::exp(col[j]));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Finite-difference consistency check
// ---------------------------------------------------------------------------

struct FdCheckParams {
    double delta = 1e-4;      // bump amplitude
    int width_cells = 2;      // indicator block side, in cells
    double tol = 1e-12;       // Picard tolerance for the shifted solves
    int max_iter = 64;
    Scheme scheme = Scheme::GoursatEuler;
};

namespace detail {

inline SolutionField solve_with(const DriftField& b, const SheetPath& w, const BoundaryData& bd,
                                const FdCheckParams& p) {
    return p.scheme == Scheme::GoursatEuler ? solve_goursat_euler(b, w, bd)
                                            : solve_picard(b, w, bd, p.tol, p.max_iter);
}

}  // namespace detail

/// Compares (X[W + delta H e] - X[W]) / delta against the block average of
/// the derivative field, where H is the distribution function of a unit-mass
/// uniform density on a width x width cell block at the base node. The block
/// average is (1/width^2) sum of D over the block's cell corners; for zero
/// drift it matches the bilinear overlap at every node exactly, so the
/// discrepancy is pure drift response. Returns the d x d matrix of max-node
/// discrepancies (row = bump direction, column = solution component).
inline std::vector<double> finite_difference_check(const SmoothedDrift& sd, const SheetPath& w,
                                                   const BoundaryData& bd, int base_i, int base_j,
                                                   const FdCheckParams& p = {}) {
    const GridSpec& g = w.grid();
    const int d = g.d;
    if (p.width_cells < 2)
        throw std::invalid_argument("finite_difference_check: block must span >= 2 cells");
    if (base_i <= 0 || base_j <= 0 || base_i + p.width_cells > g.n_s ||
        base_j + p.width_cells > g.n_t)
        throw std::invalid_argument("finite_difference_check: block must sit in the interior");

    const DriftField b = drift_field(sd);
    const SolutionField x0 = detail::solve_with(b, w, bd, p);
    const GradientField gf = gradient_field(sd, x0);

    // Block average of the derivative field, each block cell represented by
    // its upper-right corner; with that convention the average of the
    // indicator responses reproduces the overlap distribution at every node.
    const int wc = p.width_cells;
    std::vector<double> avg(g.node_count() * d * d, 0.0);
    for (int a = 1; a <= wc; ++a)
        for (int c = 1; c <= wc; ++c) {
            const MalliavinField df = malliavin_derivative(gf, base_i + a, base_j + c);
            for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += df.values[k];
        }
    const double inv = 1.0 / (static_cast<double>(wc) * wc);
    for (double& v : avg) v *= inv;

    // Distribution function of the block density at the nodes.
    const double s0 = g.s(base_i), t0 = g.t(base_j);
    const double side_s = wc * g.ds(), side_t = wc * g.dt();
    auto overlap = [&](int i, int j) {
        const double os = std::clamp(g.s(i) - s0, 0.0, side_s);
        const double ot = std::clamp(g.t(j) - t0, 0.0, side_t);
        return (os / side_s) * (ot / side_t);
    };

    MalliavinField avg_field;  // reuse the indexing helper
    avg_field.grid = g;
    avg_field.values = std::move(avg);

    std::vector<double> out(static_cast<std::size_t>(d) * d, 0.0);
    for (int e = 0; e < d; ++e) {
        std::vector<double> shifted(w.values().begin(), w.values().end());
        for (int i = 0; i <= g.n_s; ++i)
            for (int j = 0; j <= g.n_t; ++j)
                shifted[g.at(i, j, e)] += p.delta * overlap(i, j);
        const SheetPath ws(g, w.seed(), std::move(shifted));
        const SolutionField x1 = detail::solve_with(b, ws, bd, p);

        for (int c = 0; c < d; ++c) {
            double worst = 0.0;
            for (int i = 0; i <= g.n_s; ++i)
                for (int j = 0; j <= g.n_t; ++j) {
                    const double numeric = (x1(i, j, c) - x0(i, j, c)) / p.delta;
                    worst = std::max(worst, std::fabs(numeric - avg_field(i, j, e, c)));
                }
            out[static_cast<std::size_t>(e) * d + c] = worst;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// L2 bounds and Hoelder experiments
// ---------------------------------------------------------------------------

struct L2BoundsRow {
    int level = 0;
    double ex2_mean = 0.0, ex2_se = 0.0;     // E max-norm^2 of X_{s,t}
    double ed2_mean = 0.0, ed2_se = 0.0;     // sup over base lattice of E ||D||^2
};

struct L2BoundsReport {
    std::vector<L2BoundsRow> rows;
    double slope_x = 0.0, slope_x_se = 0.0;  // trends of the estimates in n
    double slope_d = 0.0, slope_d_se = 0.0;
    MalliavinRegime regime = MalliavinRegime::Bounded;
    double tau = 1.0;
};

struct L2BoundsParams {
    std::vector<int> levels{4, 8, 16};
    double s = 1.0, t = 1.0;
    std::size_t paths = 1000;
    std::uint64_t seed0 = 1;
    int grid_n = 64;
    int base_stride = 16;  // base-point sublattice spacing, in cells
    double xi = 0.0;
    MalliavinRegime regime = MalliavinRegime::Bounded;
    double tau = 1.0;  // required horizon in the SmallTime regime
    int workers = 1;
};

inline L2BoundsReport l2_bounds_experiment(const MonotonePair& drift, const L2BoundsParams& p) {
    if (p.regime == MalliavinRegime::SmallTime && (p.s > p.tau || p.t > p.tau))
        throw std::invalid_argument("l2_bounds_experiment: target (s,t) outside the horizon tau = " +
                                    std::to_string(p.tau));
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.s_max = p.s;
    g.t_max = p.t;
    g.d = drift.dim;
    g.validate();
    const auto bd = BoundaryData::constant(g.d, p.xi);

    L2BoundsReport rep;
    rep.regime = p.regime;
    rep.tau = p.tau;
    for (int n : p.levels) {
        const SmoothedDrift sd(drift, n);
        const DriftField b = drift_field(sd);
        std::vector<double> x2(p.paths);
        std::vector<std::vector<double>> d2;  // per base point, per path
        std::vector<std::pair<int, int>> bases;
        for (int bi = 0; bi <= g.n_s; bi += p.base_stride)
            for (int bj = 0; bj <= g.n_t; bj += p.base_stride) bases.push_back({bi, bj});
        d2.assign(bases.size(), std::vector<double>(p.paths, 0.0));

        parallel_for_index(p.paths, p.workers, [&](std::size_t rep_i) {
            const SheetPath w = generate_sheet(g, p.seed0 + rep_i);
            const SolutionField x = solve_goursat_euler(b, w, bd);
            double m = 0.0;
            for (int c = 0; c < g.d; ++c) m = std::max(m, std::fabs(x(g.n_s, g.n_t, c)));
            x2[rep_i] = m * m;
            const GradientField gf = gradient_field(sd, x);
            for (std::size_t bi = 0; bi < bases.size(); ++bi) {
                const MalliavinField df = malliavin_derivative(gf, bases[bi].first, bases[bi].second);
                const double nm = df.max_norm(g.n_s, g.n_t);
                d2[bi][rep_i] = nm * nm;
            }
        });

        L2BoundsRow row;
        row.level = n;
        const auto sx = mc_stats(x2);
        row.ex2_mean = sx.mean;
        row.ex2_se = sx.stderr_of_mean;
        for (const auto& per_base : d2) {
            const auto sd2 = mc_stats(per_base);
            if (sd2.mean > row.ed2_mean) {
                row.ed2_mean = sd2.mean;
                row.ed2_se = sd2.stderr_of_mean;
            }
        }
        rep.rows.push_back(row);
    }

    if (rep.rows.size() >= 2) {
        std::vector<double> ns, ex, ex_se, ed, ed_se;
        for (const auto& r : rep.rows) {
            ns.push_back(static_cast<double>(r.level));
            ex.push_back(r.ex2_mean);
            ex_se.push_back(r.ex2_se);
            ed.push_back(r.ed2_mean);
            ed_se.push_back(r.ed2_se);
        }
        const LineFit fx = fit_trend(ns, ex, ex_se);
        const LineFit fd = fit_trend(ns, ed, ed_se);
        rep.slope_x = fx.slope;
        rep.slope_x_se = fx.slope_se;
        rep.slope_d = fd.slope;
        rep.slope_d_se = fd.slope_se;
    }
    return rep;
}

struct HolderPair {
    int r_i = 0, u_i = 0, r2_i = 0, u2_i = 0;
    double dist = 0.0;            // |r - r'| + |u - u'|
    double ed2_mean = 0.0, ed2_se = 0.0;
};

struct HolderReport {
    std::vector<HolderPair> pairs;
    double slope = 0.0, slope_se = 0.0;
    double intercept = 0.0;  // log C
};

struct HolderParams {
    int level = 8;
    std::size_t paths = 200;
    std::uint64_t seed0 = 1;
    int grid_n = 128;
    double xi = 0.0;
    // pair offsets in cells, stratified across dyadic decades
    std::vector<int> offsets{1, 2, 4, 8, 16, 32};
    int pairs_per_offset = 2;
    int workers = 1;
};

/// Regression of log E||D_{r,u}X - D_{r',u'}X||^2 on log(|r-r'| + |u-u'|);
/// the bound predicts slope >= 1.
inline HolderReport holder_experiment(const MonotonePair& drift, const HolderParams& p) {
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = drift.dim;
    g.validate();
    const SmoothedDrift sd(drift, p.level);
    const DriftField b = drift_field(sd);
    const auto bd = BoundaryData::constant(g.d, p.xi);

    // deterministic stratified pairs: one anchor per (offset, direction)
    std::vector<HolderPair> pairs;
    std::vector<std::pair<int, int>> bases;
    const std::uint64_t key = rng::make_key(p.seed0, rng::Domain::Generic);
    std::size_t stratum = 0;
    for (int off : p.offsets) {
        for (int rep = 0; rep < p.pairs_per_offset; ++rep, ++stratum) {
            const int max_base_s = g.n_s / 2;
            const int max_base_t = g.n_t / 2;
            HolderPair pr;
            pr.r_i = static_cast<int>(rng::uniform(key, stratum, 0, 0.0, max_base_s));
            pr.u_i = static_cast<int>(rng::uniform(key, stratum, 1, 0.0, max_base_t));
            if (rep % 2 == 0) {
                pr.r2_i = pr.r_i + off;
                pr.u2_i = pr.u_i;
            } else {
                pr.r2_i = pr.r_i;
                pr.u2_i = pr.u_i + off;
            }
            pr.dist = std::fabs(g.s(pr.r2_i) - g.s(pr.r_i)) + std::fabs(g.t(pr.u2_i) - g.t(pr.u_i));
            pairs.push_back(pr);
        }
    }

    std::vector<std::vector<double>> d2(pairs.size(), std::vector<double>(p.paths, 0.0));
    parallel_for_index(p.paths, p.workers, [&](std::size_t rep_i) {
        const SheetPath w = generate_sheet(g, p.seed0 + rep_i);
        const SolutionField x = solve_goursat_euler(b, w, bd);
        const GradientField gf = gradient_field(sd, x);
        std::map<std::pair<int, int>, MalliavinField> cache;
        auto field_at = [&](int bi, int bj) -> const MalliavinField& {
            auto it = cache.find({bi, bj});
            if (it == cache.end())
                it = cache.emplace(std::make_pair(bi, bj), malliavin_derivative(gf, bi, bj)).first;
            return it->second;
        };
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const auto& pr = pairs[pi];
            const MalliavinField& a = field_at(pr.r_i, pr.u_i);
            const MalliavinField& c = field_at(pr.r2_i, pr.u2_i);
            double m = 0.0;
            for (int aa = 0; aa < g.d; ++aa)
                for (int bb = 0; bb < g.d; ++bb)
                    m = std::max(m, std::fabs(a(g.n_s, g.n_t, aa, bb) - c(g.n_s, g.n_t, aa, bb)));
            d2[pi][rep_i] = m * m;
        }
    });

    HolderReport rep;
    std::vector<double> lx, ly;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        const auto st = mc_stats(d2[pi]);
        pairs[pi].ed2_mean = st.mean;
        pairs[pi].ed2_se = st.stderr_of_mean;
        if (st.mean > 0.0) {
            lx.push_back(std::log(pairs[pi].dist));
            ly.push_back(std::log(st.mean));
        }
    }
    rep.pairs = pairs;
    if (lx.size() >= 2) {
        const LineFit fit = fit_line(lx, ly);
        rep.slope = fit.slope;
        rep.slope_se = fit.slope_se;
        rep.intercept = fit.intercept;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Fractional Sobolev functional
// ---------------------------------------------------------------------------

struct SobolevParams {
    int level = 8;
    double beta = 0.25;
    std::size_t paths = 100;
    std::uint64_t seed0 = 1;
    int grid_n = 64;
    int lattice = 8;  // base-point lattice is lattice x lattice midpoints
    double xi = 0.0;
    int workers = 1;
};

/// 4-D midpoint sum over base-point pairs (r,u), (r',u') of
///   E||D_{r,u}X_{s,t} - D_{r',u'}X_{s,t}||^2 / (|r-r'| + |u-u'|)^{2+2beta},
/// with the expectation estimated by Monte Carlo on a coupled ensemble.
/// Finite for beta < 1/2 and refinement-divergent above, which the tests
/// probe by growing the lattice.
inline double sobolev_functional(const MonotonePair& drift, const SobolevParams& p) {
    if (!(p.beta > 0.0) || !(p.beta < 1.0))
        throw std::invalid_argument("sobolev_functional: beta must lie in (0, 1)");
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = drift.dim;
    g.validate();
    if (g.n_s % (2 * p.lattice) != 0)
        throw std::invalid_argument("sobolev_functional: grid must resolve the lattice midpoints");
    const SmoothedDrift sd(drift, p.level);
    const DriftField b = drift_field(sd);
    const auto bd = BoundaryData::constant(g.d, p.xi);

    // midpoint lattice (r_a, u_b) = ((a+1/2)/m, (b+1/2)/m) on grid nodes
    std::vector<int> nodes(p.lattice);
    for (int a = 0; a < p.lattice; ++a) nodes[a] = (2 * a + 1) * g.n_s / (2 * p.lattice);

    const std::size_t m2 = static_cast<std::size_t>(p.lattice) * p.lattice;
    std::vector<std::vector<double>> sums(p.paths);  // per path: ||D_a - D_b||^2 per pair
    parallel_for_index(p.paths, p.workers, [&](std::size_t rep_i) {
        const SheetPath w = generate_sheet(g, p.seed0 + rep_i);
        const SolutionField x = solve_goursat_euler(b, w, bd);
        const GradientField gf = gradient_field(sd, x);
        std::vector<double> corner(m2 * g.d * g.d);
        for (int a = 0; a < p.lattice; ++a)
            for (int c = 0; c < p.lattice; ++c) {
                const MalliavinField df = malliavin_derivative(gf, nodes[a], nodes[c]);
                for (int aa = 0; aa < g.d; ++aa)
                    for (int bb = 0; bb < g.d; ++bb)
                        corner[((static_cast<std::size_t>(a) * p.lattice + c) * g.d + aa) * g.d + bb] =
                            df(g.n_s, g.n_t, aa, bb);
            }
        std::vector<double>& pair_sq = sums[rep_i];
        pair_sq.assign(m2 * m2, 0.0);
        for (std::size_t pa = 0; pa < m2; ++pa)
            for (std::size_t pb = 0; pb < m2; ++pb) {
                double m = 0.0;
                for (int aa = 0; aa < g.d; ++aa)
                    for (int bb = 0; bb < g.d; ++bb) {
                        const double diff = corner[(pa * g.d + aa) * g.d + bb] -
                                            corner[(pb * g.d + aa) * g.d + bb];
                        m = std::max(m, std::fabs(diff));
                    }
                pair_sq[pa * m2 + pb] = m * m;
            }
    });

    // 4-D midpoint weights: cell measure (s_max/m)^2 per point, squared for
    // the pair; the diagonal contributes zero since E||D-D||^2 = 0.
    const double cell = (g.s_max / p.lattice) * (g.t_max / p.lattice);
    double total = 0.0;
    std::vector<double> acc(p.paths);
    for (std::size_t pa = 0; pa < m2; ++pa) {
        const int a1 = static_cast<int>(pa) / p.lattice, c1 = static_cast<int>(pa) % p.lattice;
        for (std::size_t pb = 0; pb < m2; ++pb) {
            if (pa == pb) continue;
            const int a2 = static_cast<int>(pb) / p.lattice, c2 = static_cast<int>(pb) % p.lattice;
            const double dist = std::fabs(g.s(nodes[a1]) - g.s(nodes[a2])) +
                                std::fabs(g.t(nodes[c1]) - g.t(nodes[c2]));
            for (std::size_t k = 0; k < p.paths; ++k) acc[k] = sums[k][pa * m2 + pb];
            const double e = mc_stats(acc).mean;
            total += cell * cell * e / std::pow(dist, 2.0 + 2.0 * p.beta);
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Strong convergence diagnostics
// ---------------------------------------------------------------------------

struct StrongConvergenceRow {
    int level = 0;
    double mean = 0.0, se = 0.0;  // E |X^n_{s,t} - X^{ref}_{s,t}|^2
};

struct StrongConvergenceParams {
    std::vector<int> levels{2, 4, 8, 16, 32};  // last level is the reference
    std::size_t paths = 200;
    std::uint64_t seed0 = 1;
    int grid_n = 64;
    double xi = 0.0;
    int workers = 1;
};

inline std::vector<StrongConvergenceRow> strong_convergence_diag(
    const MonotonePair& drift, const StrongConvergenceParams& p) {
    if (p.levels.size() < 2)
        throw std::invalid_argument("strong_convergence_diag: need at least two levels");
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = drift.dim;
    g.validate();
    const auto bd = BoundaryData::constant(g.d, p.xi);

    std::vector<SmoothedDrift> smoothed;
    std::vector<DriftField> fields;
    smoothed.reserve(p.levels.size());
    for (int n : p.levels) smoothed.emplace_back(drift, n);
    for (const auto& sd : smoothed) fields.push_back(drift_field(sd));

    const std::size_t L = p.levels.size();
    std::vector<std::vector<double>> sq(L - 1, std::vector<double>(p.paths, 0.0));
    parallel_for_index(p.paths, p.workers, [&](std::size_t rep_i) {
        const SheetPath w = generate_sheet(g, p.seed0 + rep_i);
        std::vector<std::vector<double>> corners(L, std::vector<double>(g.d));
        for (std::size_t li = 0; li < L; ++li) {
            const SolutionField x = solve_goursat_euler(fields[li], w, bd);
            for (int c = 0; c < g.d; ++c) corners[li][c] = x(g.n_s, g.n_t, c);
        }
        for (std::size_t li = 0; li + 1 < L; ++li) {
            double acc = 0.0;
            for (int c = 0; c < g.d; ++c) {
                const double diff = corners[li][c] - corners[L - 1][c];
                acc += diff * diff;
            }
            sq[li][rep_i] = acc;
        }
    });

    std::vector<StrongConvergenceRow> rows;
    for (std::size_t li = 0; li + 1 < L; ++li) {
        const auto st = mc_stats(sq[li]);
        rows.push_back({p.levels[li], st.mean, st.stderr_of_mean});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Small-time regime selection
// ---------------------------------------------------------------------------

struct SmallTimeRow {
    double horizon = 0.0;
    double mean = 0.0, se = 0.0;           // E[exponential^2] over [0,h]^2
    double mean_half = 0.0, se_half = 0.0;
    bool stable = false;
};

struct SmallTimeReport {
    double tau = 0.0;    // min(tau1, zeta / (32 d^2)), capped at 1
    double tau1 = 0.0;   // largest probed horizon with a stable second moment
    double zeta = 0.0;   // 1 / (2^6 c1^2 M), infinite for bounded drifts
    double c1 = 2.0;
    std::vector<SmallTimeRow> rows;
};

struct SmallTimeParams {
    double c1 = 2.0;  // Burkholder-type constant, configuration value
    std::vector<double> horizons{1.0, 0.5, 0.25, 0.125};
    std::size_t paths = 2000;
    std::uint64_t seed0 = 1;
    int grid_n = 32;
    int workers = 1;
};

/// Probes E[exponential^2] over shrinking horizons and combines the largest
/// stable one with the linear-growth constant zeta = 1/(2^6 c1^2 M) into
/// tau = min(tau1, zeta / (32 d^2)). Bounded drifts (M = 0) cap tau at 1.
inline SmallTimeReport small_time_regime(const MonotonePair& drift, const SmallTimeParams& p) {
    const int d = drift.dim;
    SmallTimeReport rep;
    rep.c1 = p.c1;
    const double m = drift.growth.kind == Growth::Kind::LinearGrowth ? drift.growth.bound : 0.0;
    rep.zeta = m > 0.0 ? 1.0 / (64.0 * p.c1 * p.c1 * m) : std::numeric_limits<double>::infinity();

    const DriftField b = drift_field(drift);
    for (double h : p.horizons) {
        GridSpec g;
        g.n_s = g.n_t = p.grid_n;
        g.s_max = g.t_max = h;
        g.d = d;
        SmallTimeRow row;
        row.horizon = h;
        std::vector<double> sq(p.paths, std::numeric_limits<double>::quiet_NaN());
        std::size_t overflow = 0;
        parallel_for_index(p.paths, p.workers, [&](std::size_t rep_i) {
            const SheetPath w = generate_sheet(g, p.seed0 + rep_i);
            try {
                const double e = girsanov_weight(b, w).weight;
                sq[rep_i] = e * e;
            } catch (const GirsanovOverflowError&) {
                sq[rep_i] = std::numeric_limits<double>::infinity();
            }
        });
        std::vector<double> clean;
        clean.reserve(p.paths);
        for (double v : sq) {
            if (std::isfinite(v)) clean.push_back(v);
            else ++overflow;
        }
        if (!clean.empty()) {
            const auto full = mc_stats(clean);
            const auto half = mc_stats(std::span<const double>(clean).first(
                clean.size() / 2 ? clean.size() / 2 : 1));
            row.mean = full.mean;
            row.se = full.stderr_of_mean;
            row.mean_half = half.mean;
            row.se_half = half.stderr_of_mean;
            const double band = 3.0 * std::sqrt(full.stderr_of_mean * full.stderr_of_mean +
                                                half.stderr_of_mean * half.stderr_of_mean);
            row.stable = overflow == 0 && std::isfinite(row.mean) &&
                         std::fabs(row.mean - row.mean_half) <= band;
        }
        rep.rows.push_back(row);
        if (row.stable) rep.tau1 = std::max(rep.tau1, h);
    }
    if (rep.tau1 == 0.0)
        throw std::runtime_error(
            "small_time_regime: no stable horizon found; reduce the growth constant");
    rep.tau = std::min({rep.tau1, rep.zeta / (32.0 * d * d), 1.0});
    return rep;
}

}  // namespace sheetfield
