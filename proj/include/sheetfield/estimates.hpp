#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/drift.hpp"
#include "sheetfield/sheet.hpp"
#include "sheetfield/solver.hpp"
#include "sheetfield/stats.hpp"

namespace sheetfield {

/// Dyadic cell I_{nk} x I_{nk'} with I_{nk} = (k 2^-n, (k+1) 2^-n].
struct DyadicCell {
    int n = 1;
    int k = 0;
    int kp = 0;

    void validate() const {
        if (n < 1 || k < 0 || kp < 0 || k >= (1 << n) || kp >= (1 << n))
            throw std::invalid_argument("DyadicCell: indices out of range");
    }
};

/// Averaging operator over one dyadic cell, per drift component:
///   rho_{nkk'}(x, y) = int int { b(s,t,W+x) - b(s,t,W+y) } dt ds
/// by the 2-D midpoint rule on the grid cells inside the dyadic cell.
inline std::vector<double> rho(const DyadicCell& cell, std::span<const double> x,
                               std::span<const double> y, const SheetPath& sheet,
                               const MonotonePair& drift) {
    cell.validate();
    for (double v : x)
        if (std::fabs(v) > 1.0) throw std::invalid_argument("rho: offsets must lie in [-1,1]^d");
    for (double v : y)
        if (std::fabs(v) > 1.0) throw std::invalid_argument("rho: offsets must lie in [-1,1]^d");
    const GridSpec& g = sheet.grid();
    const int buckets = 1 << cell.n;
    if (g.n_s % buckets != 0 || g.n_t % buckets != 0)
        throw std::invalid_argument("rho: grid does not resolve the dyadic level");
    if (g.s_max != 1.0 || g.t_max != 1.0)
        throw std::invalid_argument("rho: needs the unit square");
    const int ms = g.n_s / buckets, mt = g.n_t / buckets;
    const double area = g.cell_area();
    std::vector<double> out(g.d, 0.0);
    std::vector<double> wx(g.d), wy(g.d), bx(g.d), by(g.d);
    for (int i = cell.k * ms; i < (cell.k + 1) * ms; ++i) {
        for (int j = cell.kp * mt; j < (cell.kp + 1) * mt; ++j) {
            for (int c = 0; c < g.d; ++c) {
                const double wm = 0.25 * (sheet(i, j, c) + sheet(i + 1, j, c) +
                                          sheet(i, j + 1, c) + sheet(i + 1, j + 1, c));
                wx[c] = wm + x[c];
                wy[c] = wm + y[c];
            }
            const double sm = g.s(i) + 0.5 * g.ds(), tm = g.t(j) + 0.5 * g.dt();
            drift.eval(sm, tm, wx, bx);
            drift.eval(sm, tm, wy, by);
            for (int c = 0; c < g.d; ++c) out[c] += (bx[c] - by[c]) * area;
        }
    }
    return out;
}

namespace detail {

/// Cell integrals of b(W + offset) for one path and a set of offsets, at the
/// finest dyadic level the grid resolves, rolled up to all requested levels.
/// levels[o][n] is a (2^n * 2^n * d) array indexed (k * 2^n + k') * d + c.
struct DyadicRollup {
    int n_lo = 1, n_hi = 1, d = 1;
    // per offset, per level n in [n_lo, n_hi]
    std::vector<std::vector<std::vector<double>>> levels;

    std::span<const double> at(std::size_t offset_idx, int n, int k, int kp) const {
        const auto& lvl = levels[offset_idx][n - n_lo];
        return {&lvl[(static_cast<std::size_t>(k) * (1 << n) + kp) * d], static_cast<std::size_t>(d)};
    }
};

inline DyadicRollup dyadic_rollup(const SheetPath& sheet, const MonotonePair& drift,
                                  const std::vector<std::vector<double>>& offsets, int n_lo,
                                  int n_hi) {
    const GridSpec& g = sheet.grid();
    const int buckets = 1 << n_hi;
    if (g.n_s % buckets != 0 || g.n_t % buckets != 0)
        throw std::invalid_argument("dyadic_rollup: grid does not resolve the finest level");
    const int ms = g.n_s / buckets, mt = g.n_t / buckets;
    const double area = g.cell_area();
    const int d = g.d;

    DyadicRollup roll;
    roll.n_lo = n_lo;
    roll.n_hi = n_hi;
    roll.d = d;
    roll.levels.assign(offsets.size(), {});
    for (auto& per_offset : roll.levels) {
        per_offset.resize(n_hi - n_lo + 1);
        for (int n = n_lo; n <= n_hi; ++n)
            per_offset[n - n_lo].assign((static_cast<std::size_t>(1) << (2 * n)) * d, 0.0);
    }

    std::vector<double> w(d), xb(d), val(d);
    for (int i = 0; i < g.n_s; ++i) {
        const int k = i / ms;
        for (int j = 0; j < g.n_t; ++j) {
            const int kp = j / mt;
            for (int c = 0; c < d; ++c)
                w[c] = 0.25 * (sheet(i, j, c) + sheet(i + 1, j, c) + sheet(i, j + 1, c) +
                               sheet(i + 1, j + 1, c));
            const double sm = g.s(i) + 0.5 * g.ds(), tm = g.t(j) + 0.5 * g.dt();
            for (std::size_t o = 0; o < offsets.size(); ++o) {
                for (int c = 0; c < d; ++c) xb[c] = w[c] + offsets[o][c];
                drift.eval(sm, tm, xb, val);
                auto& fine = roll.levels[o][n_hi - n_lo];
                double* cellp = &fine[(static_cast<std::size_t>(k) * buckets + kp) * d];
                for (int c = 0; c < d; ++c) cellp[c] += val[c] * area;
            }
        }
    }
    // Children sum to parents: I_{nk} = I_{n+1,2k} u I_{n+1,2k+1}.
    for (int n = n_hi - 1; n >= n_lo; --n) {
        const int bn = 1 << n;
        for (std::size_t o = 0; o < offsets.size(); ++o) {
            const auto& child = roll.levels[o][n + 1 - n_lo];
            auto& parent = roll.levels[o][n - n_lo];
            for (int k = 0; k < bn; ++k)
                for (int kp = 0; kp < bn; ++kp)
                    for (int c = 0; c < d; ++c) {
                        double acc = 0.0;
                        for (int a = 0; a < 2; ++a)
                            for (int b = 0; b < 2; ++b)
                                acc += child[(static_cast<std::size_t>(2 * k + a) * 2 * bn +
                                              (2 * kp + b)) * d + c];
                        parent[(static_cast<std::size_t>(k) * bn + kp) * d + c] = acc;
                    }
        }
    }
    return roll;
}

inline double norm2(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double log_plus(double z) { return z > 1.0 ? std::log(z) : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Random-constant fits for the averaging-operator bounds
// ---------------------------------------------------------------------------

enum class AveragingBound { PseudoMetric, Origin };  // C1-type and C2-type

/// Denominator of the ratio whose path-ensemble maximum estimates the random
/// constant: 2^-n [sqrt(n) + sqrt(log+ 1/|x-y|)] |x-y| for the C1 bound,
/// sqrt(n) 2^-n (|x| + 2^{-4^n}) for the C2 bound at y = 0.
inline double averaging_denominator(AveragingBound kind, int n, double dist) {
    const double two_n = std::ldexp(1.0, -n);
    if (kind == AveragingBound::PseudoMetric)
        return two_n * (std::sqrt(static_cast<double>(n)) + std::sqrt(detail::log_plus(1.0 / dist))) * dist;
    const double tiny = std::pow(2.0, -std::pow(4.0, n));  // underflows to 0 for n >= 5
    return std::sqrt(static_cast<double>(n)) * two_n * (dist + tiny);
}

struct FitReport {
    std::string constant_name;
    double fitted = 0.0;        // max ratio over the fit ensemble
    double fitted_half = 0.0;   // same over the first half (stability probe)
    std::vector<int> levels;
    std::vector<double> level_maxima;  // per level, over paths/cells/offsets
    std::size_t paths = 0;
    std::uint64_t seed0 = 0;
};

struct AveragingCheck {
    FitReport fit;
    std::size_t check_paths = 0;
    std::size_t check_violations = 0;  // cells violating safety * fitted
    double safety = 2.0;
    std::vector<double> path_maxima;   // per path (fit set first, then check set)
};

struct AveragingParams {
    AveragingBound kind = AveragingBound::Origin;
    std::vector<int> levels = {3, 4, 5, 6, 7, 8};
    std::vector<std::vector<double>> xs;   // offsets x (Origin) or pairs via ys
    std::vector<std::vector<double>> ys;   // empty for Origin (y = 0)
    std::size_t fit_paths = 200;
    std::size_t check_paths = 200;
    std::uint64_t seed0 = 1;
    int grid_n = 256;
    int d = 1;
    double safety = 2.0;
    int workers = 1;
};

/// Fits the random constant out of one path ensemble and counts check-set
/// violations at the safety factor on a disjoint ensemble. The fit and the
/// check must not share paths for the violation count to mean anything.
inline AveragingCheck averaging_fit_and_check(const MonotonePair& drift,
                                              const AveragingParams& p) {
    if (p.xs.empty()) throw std::invalid_argument("averaging_fit_and_check: empty offset set");
    const int n_lo = *std::min_element(p.levels.begin(), p.levels.end());
    const int n_hi = *std::max_element(p.levels.begin(), p.levels.end());
    if (n_lo < 1) throw std::invalid_argument("averaging_fit_and_check: levels must be >= 1");

    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = p.d;
    g.validate();

    // Offsets evaluated once per path: the x set, the y set, and 0.
    std::vector<std::vector<double>> offsets = p.xs;
    std::size_t y_base = 0;
    if (p.kind == AveragingBound::PseudoMetric) {
        if (p.ys.size() != p.xs.size())
            throw std::invalid_argument("averaging_fit_and_check: xs/ys size mismatch");
        y_base = offsets.size();
        offsets.insert(offsets.end(), p.ys.begin(), p.ys.end());
    } else {
        y_base = offsets.size();
        offsets.push_back(std::vector<double>(p.d, 0.0));  // shared y = 0
    }

    // Max ratio per path, per level.
    const std::size_t total = p.fit_paths + p.check_paths;
    std::vector<std::vector<double>> path_level_max(total,
                                                    std::vector<double>(p.levels.size(), 0.0));
    parallel_for_index(total, p.workers, [&](std::size_t rep) {
        const SheetPath sheet = generate_sheet(g, p.seed0 + rep);
        const detail::DyadicRollup roll = detail::dyadic_rollup(sheet, drift, offsets, n_lo, n_hi);
        for (std::size_t li = 0; li < p.levels.size(); ++li) {
            const int n = p.levels[li];
            const int bn = 1 << n;
            double worst = 0.0;
            for (std::size_t xi = 0; xi < p.xs.size(); ++xi) {
                const std::size_t yi = (p.kind == AveragingBound::PseudoMetric) ? y_base + xi : y_base;
                std::vector<double> dvec(p.d);
                for (int c = 0; c < p.d; ++c)
                    dvec[c] = p.xs[xi][c] - (p.kind == AveragingBound::PseudoMetric
                                                 ? p.ys[xi][c] : 0.0);
                const double dist = detail::norm2(dvec);
                if (dist == 0.0) continue;
                const double denom = averaging_denominator(p.kind, n, dist);
                for (int k = 0; k < bn; ++k)
                    for (int kp = 0; kp < bn; ++kp) {
                        const auto a = roll.at(xi, n, k, kp);
                        const auto b = roll.at(yi, n, k, kp);
                        double num = 0.0;
                        for (int c = 0; c < p.d; ++c)
                            num = std::max(num, std::fabs(a[c] - b[c]));
                        worst = std::max(worst, num / denom);
                    }
            }
            path_level_max[rep][li] = worst;
        }
    });

    AveragingCheck out;
    out.safety = p.safety;
    out.fit.constant_name = p.kind == AveragingBound::PseudoMetric ? "C1" : "C2";
    out.fit.levels = p.levels;
    out.fit.level_maxima.assign(p.levels.size(), 0.0);
    out.fit.paths = p.fit_paths;
    out.fit.seed0 = p.seed0;
    out.path_maxima.assign(total, 0.0);
    for (std::size_t rep = 0; rep < p.fit_paths; ++rep) {
        double m = 0.0;
        for (std::size_t li = 0; li < p.levels.size(); ++li) {
            out.fit.level_maxima[li] = std::max(out.fit.level_maxima[li], path_level_max[rep][li]);
            m = std::max(m, path_level_max[rep][li]);
        }
        out.path_maxima[rep] = m;
        out.fit.fitted = std::max(out.fit.fitted, m);
        if (rep < p.fit_paths / 2) out.fit.fitted_half = std::max(out.fit.fitted_half, m);
    }
    out.check_paths = p.check_paths;
    for (std::size_t rep = p.fit_paths; rep < total; ++rep) {
        double m = 0.0;
        for (double v : path_level_max[rep]) m = std::max(m, v);
        out.path_maxima[rep] = m;
        if (m > p.safety * out.fit.fitted) ++out.check_violations;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tail bound experiment
// ---------------------------------------------------------------------------

struct TailRow {
    double eta = 0.0;
    std::size_t hits = 0;
    double p_hat = 0.0;
};

struct TailReport {
    std::vector<TailRow> rows;   // all probed etas
    std::vector<TailRow> used;   // rows entering the fit (hits >= min_hits)
    double alpha_hat = 0.0;
    double r_squared = 0.0;
    bool truncated = false;      // some etas lacked tail mass
    std::size_t paths = 0;
};

struct TailParams {
    Rect rect{0.0, 1.0, 0.0, 1.0};
    std::vector<double> x{0.1}, y{-0.1};
    std::vector<double> etas{0.25, 0.5, 0.75, 1.0, 1.25, 1.5};
    std::size_t paths = 100000;
    std::uint64_t seed0 = 1;
    int grid_n = 64;
    int d = 1;
    std::size_t min_hits = 50;
    int workers = 1;
};

/// Empirical exceedance probabilities of |rho(x,y)| over eta sqrt(area)|x-y|
/// and the Gaussian-tail fit of log p against eta^2 (alpha = -slope).
inline TailReport tail_experiment(const MonotonePair& drift, const TailParams& p) {
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = p.d;
    g.validate();
    p.rect.validate();

    std::vector<double> rho_abs(p.paths);
    parallel_for_index(p.paths, p.workers, [&](std::size_t rep) {
        const SheetPath sheet = generate_sheet(g, p.seed0 + rep);
        const int i0 = g.snap_s(p.rect.s_lo), i1 = g.snap_s(p.rect.s_hi);
        const int j0 = g.snap_t(p.rect.t_lo), j1 = g.snap_t(p.rect.t_hi);
        std::vector<double> wx(g.d), wy(g.d), bx(g.d), by(g.d), acc(g.d, 0.0);
        for (int i = i0; i < i1; ++i)
            for (int j = j0; j < j1; ++j) {
                for (int c = 0; c < g.d; ++c) {
                    const double wm = 0.25 * (sheet(i, j, c) + sheet(i + 1, j, c) +
                                              sheet(i, j + 1, c) + sheet(i + 1, j + 1, c));
                    wx[c] = wm + p.x[c];
                    wy[c] = wm + p.y[c];
                }
                const double sm = g.s(i) + 0.5 * g.ds(), tm = g.t(j) + 0.5 * g.dt();
                drift.eval(sm, tm, wx, bx);
                drift.eval(sm, tm, wy, by);
                for (int c = 0; c < g.d; ++c) acc[c] += (bx[c] - by[c]) * g.cell_area();
            }
        double worst = 0.0;
        for (int c = 0; c < g.d; ++c) worst = std::max(worst, std::fabs(acc[c]));
        rho_abs[rep] = worst;
    });

    std::vector<double> dvec(p.d);
    for (int c = 0; c < p.d; ++c) dvec[c] = p.x[c] - p.y[c];
    const double dist = detail::norm2(dvec);
    const double scale =
        std::sqrt((p.rect.s_hi - p.rect.s_lo) * (p.rect.t_hi - p.rect.t_lo)) * dist;

    TailReport rep;
    rep.paths = p.paths;
    for (double eta : p.etas) {
        TailRow row;
        row.eta = eta;
        for (double r : rho_abs)
            if (r >= eta * scale) ++row.hits;
        row.p_hat = static_cast<double>(row.hits) / static_cast<double>(p.paths);
        rep.rows.push_back(row);
        if (row.hits >= p.min_hits && row.hits < p.paths)
            rep.used.push_back(row);
        else
            rep.truncated = true;
    }
    if (rep.used.size() >= 2) {
        std::vector<double> xs, ys, ws;
        for (const auto& row : rep.used) {
            xs.push_back(row.eta * row.eta);
            ys.push_back(std::log(row.p_hat));
            ws.push_back(static_cast<double>(row.hits));
        }
        const LineFit fit = fit_line(xs, ys, ws);
        rep.alpha_hat = -fit.slope;
        rep.r_squared = fit.r_squared;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Exponential moment experiment
// ---------------------------------------------------------------------------

struct ExpMomentRow {
    double alpha = 0.0;
    double mean = 0.0;
    double stderr_of_mean = 0.0;
    double mean_half = 0.0;          // first-half mean, for the doubling probe
    double stderr_half = 0.0;
    std::size_t overflow_count = 0;  // replications whose exponent overflowed
};

struct ExpMomentParams {
    double a = 0.0, a_prime = 0.0, eps = 1.0, eps_prime = 1.0;
    std::vector<double> alphas{0.05, 0.1, 0.2, 0.4};
    std::size_t paths = 2000;
    std::uint64_t seed0 = 1;
    int grid_n = 64;
    int component = 0;  // scalar b = that component of the smoothed drift
    int workers = 1;
};

/// Monte Carlo table of E[exp(alpha eps' eps |iint grad b(W~)|^2)] where W~
/// is the rescaled window process and grad b the gradient of one smoothed
/// drift component.
inline std::vector<ExpMomentRow> exp_moment_experiment(const SmoothedDrift& sd,
                                                       const ExpMomentParams& p) {
    const int d = sd.dim();
    GridSpec g;
    g.n_s = g.n_t = p.grid_n;
    g.d = d;
    g.validate();

    std::vector<double> isq(p.paths);
    parallel_for_index(p.paths, p.workers, [&](std::size_t rep) {
        const SheetPath base = generate_sheet(g, p.seed0 + rep);
        const SheetPath tilde = rescale(base, p.a_prime, p.a, p.eps_prime, p.eps);
        const GridSpec& gt = tilde.grid();
        std::vector<double> w(d), grad(static_cast<std::size_t>(d) * d), acc(d, 0.0);
        for (int i = 0; i < gt.n_s; ++i)
            for (int j = 0; j < gt.n_t; ++j) {
                for (int c = 0; c < d; ++c)
                    w[c] = 0.25 * (tilde(i, j, c) + tilde(i + 1, j, c) + tilde(i, j + 1, c) +
                                   tilde(i + 1, j + 1, c));
                sd.grad(gt.s(i) + 0.5 * gt.ds(), gt.t(j) + 0.5 * gt.dt(), w, grad);
                for (int c = 0; c < d; ++c)
                    acc[c] += grad[static_cast<std::size_t>(c) * d + p.component] * gt.cell_area();
            }
        double sq = 0.0;
        for (int c = 0; c < d; ++c) sq += acc[c] * acc[c];
        isq[rep] = sq;
    });

    std::vector<ExpMomentRow> table;
    const double factor = p.eps * p.eps_prime;
    for (double alpha : p.alphas) {
        ExpMomentRow row;
        row.alpha = alpha;
        std::vector<double> vals;
        vals.reserve(p.paths);
        for (double sq : isq) {
            const double expo = alpha * factor * sq;
            if (expo > 709.0) {
                ++row.overflow_count;
                continue;
            }
            vals.push_back(std::exp(expo));
        }
        if (!vals.empty()) {
            const auto full = mc_stats(vals);
            const auto half = mc_stats(std::span<const double>(vals).first(vals.size() / 2 ? vals.size() / 2 : 1));
            row.mean = full.mean;
            row.stderr_of_mean = full.stderr_of_mean;
            row.mean_half = half.mean;
            row.stderr_half = half.stderr_of_mean;
        }
        table.push_back(row);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Gronwall recursion experiment
// ---------------------------------------------------------------------------

/// Thrown when the fitted constant is too large for the requested level.
class RegimeError : public std::runtime_error {
  public:
    RegimeError(const std::string& what, int minimal_level)
        : std::runtime_error(what), minimal_n(minimal_level) {}
    int minimal_n;
};

/// beta(n) from the admissible doubly exponential band, at the midpoint
/// exponent 17n/24, clamped to stay representable.
inline double gronwall_beta(int n, double min_beta = std::ldexp(1.0, -60)) {
    const double log2_beta = -std::pow(4.0, 17.0 * n / 24.0);
    if (log2_beta < std::log2(min_beta)) return min_beta;
    return std::exp2(log2_beta);
}

/// True when the band midpoint underflows the representable floor, i.e. the
/// returned beta is the clamp rather than the band value. Reports carry it.
inline bool gronwall_beta_clamped(int n, double min_beta = std::ldexp(1.0, -60)) {
    return -std::pow(4.0, 17.0 * n / 24.0) < std::log2(min_beta);
}

struct GronwallCell {
    int k = 0, kp = 0;          // 1-based cell labels
    double u_hat = 0.0;         // cellwise sup of max(u+, u-) over components
    double log2_bound = 0.0;    // log2 of 3^{k+k'-1} (1+3 C2 sqrt(dn) 2^-n)^{k+k'} beta
};

struct GronwallReport {
    int n = 0;
    double beta = 0.0;
    double c2 = 0.0;
    double smallness = 0.0;       // C2 sqrt(dn) 2^-n
    double threshold = 1.0 / 9.0;
    std::vector<GronwallCell> cells;
    double max_ratio = 0.0;       // max u_hat / bound over cells
    double sup_u = 0.0;
    double log2_terminal = 0.0;   // log2 of 2^{2^{n+2}} beta
    bool bound_holds = false;
    bool terminal_holds = false;
};

/// Solves the perturbation equation under beta-small boundary data and
/// checks every dyadic cell supremum against the closed-form recursion bound
///   3^{k+k'-1} (1 + 3 C2 sqrt(dn) 2^-n)^{k+k'} beta(n)
/// plus the terminal bound 2^{2^{n+2}} beta(n). Requires the smallness
/// condition C2 sqrt(dn) 2^-n <= threshold, else reports the minimal level.
inline GronwallReport gronwall_recursion(const MonotonePair& drift, const SheetPath& sheet,
                                         int n, double beta, double c2,
                                         double threshold = 1.0 / 9.0, double tol = 1e-14,
                                         int max_iter = 64) {
    const GridSpec& g = sheet.grid();
    const int buckets = 1 << n;
    if (g.n_s % buckets != 0 || g.n_t % buckets != 0)
        throw std::invalid_argument("gronwall_recursion: grid does not resolve level n");
    const double dd = static_cast<double>(drift.dim);
    const double smallness = c2 * std::sqrt(dd * n) * std::ldexp(1.0, -n);
    if (smallness > threshold) {
        int minimal = n;
        while (c2 * std::sqrt(dd * minimal) * std::ldexp(1.0, -minimal) > threshold) ++minimal;
        throw RegimeError("gronwall_recursion: smallness condition fails at n = " +
                              std::to_string(n) + ", needs n >= " + std::to_string(minimal),
                          minimal);
    }

    // Oscillating boundary data with sup exactly beta.
    const auto bd = BoundaryData::axes(
        g.d,
        [beta](double t, std::span<double> out) {
            for (auto& v : out) v = beta * std::cos(6.283185307179586 * t);
        },
        [beta](double s, std::span<double> out) {
            for (auto& v : out) v = beta * std::cos(6.283185307179586 * s);
        });
    const SolutionField u = solve_perturbation(drift_field(drift), sheet, bd, {}, tol, max_iter);

    GronwallReport rep;
    rep.n = n;
    rep.beta = beta;
    rep.c2 = c2;
    rep.smallness = smallness;
    rep.threshold = threshold;
    const double log2_growth = std::log2(1.0 + 3.0 * smallness);
    const double log2_beta = std::log2(beta);
    const int ms = g.n_s / buckets, mt = g.n_t / buckets;
    for (int k = 1; k <= buckets; ++k) {
        for (int kp = 1; kp <= buckets; ++kp) {
            GronwallCell cell;
            cell.k = k;
            cell.kp = kp;
            for (int i = (k - 1) * ms + 1; i <= k * ms; ++i)
                for (int j = (kp - 1) * mt + 1; j <= kp * mt; ++j)
                    for (int c = 0; c < g.d; ++c)
                        cell.u_hat = std::max(cell.u_hat, std::fabs(u(i, j, c)));
            cell.log2_bound = (k + kp - 1) * std::log2(3.0) + (k + kp) * log2_growth + log2_beta;
            rep.max_ratio = std::max(rep.max_ratio,
                                     cell.u_hat == 0.0
                                         ? 0.0
                                         : std::exp2(std::log2(cell.u_hat) - cell.log2_bound));
            rep.sup_u = std::max(rep.sup_u, cell.u_hat);
            rep.cells.push_back(cell);
        }
    }
    rep.log2_terminal = std::ldexp(1.0, n + 2) + log2_beta;
    rep.bound_holds = rep.max_ratio <= 1.0;
    rep.terminal_holds =
        rep.sup_u == 0.0 || std::log2(rep.sup_u) <= rep.log2_terminal;
    return rep;
}

// ---------------------------------------------------------------------------
// Uniqueness experiment
// ---------------------------------------------------------------------------

struct UniquenessParams {
    std::size_t seeds = 20;
    std::uint64_t seed0 = 1;
    std::vector<int> grids{128, 256, 512};  // ascending, each dividing the last
    int starts = 5;
    double tol = 1e-12;
    int max_iter = 200;
    int d = 1;
    double xi = 0.0;
    int workers = 1;
};

struct UniquenessRow {
    std::uint64_t seed = 0;
    std::vector<double> max_diff;   // per grid
    bool decreasing = false;        // strictly nonincreasing across grids
    int failures = 0;               // solver non-convergences (recorded, not fatal)
};

struct UniquenessReport {
    std::vector<UniquenessRow> rows;
    std::size_t decreasing_count = 0;
    double final_worst = 0.0;       // max over seeds of the finest-grid diff
};

/// For each seed: one solve per scheme of the integral equation plus one
/// perturbation solve per start, all coupled on the same noise restricted
/// across the grid ladder. The reported statistic per (seed, grid) is the
/// larger of the scheme gap and the worst perturbation sup-norm (u = 0 being
/// the reference solution).
inline UniquenessReport uniqueness_experiment(const MonotonePair& drift,
                                              const UniquenessParams& p) {
    if (p.grids.empty()) throw std::invalid_argument("uniqueness_experiment: no grids");
    const int finest = p.grids.back();
    for (int gn : p.grids)
        if (finest % gn != 0)
            throw std::invalid_argument("uniqueness_experiment: grids must divide the finest");

    UniquenessReport rep;
    rep.rows.assign(p.seeds, {});
    const DriftField df = drift_field(drift);

    parallel_for_index(p.seeds, p.workers, [&](std::size_t si) {
        UniquenessRow row;
        row.seed = p.seed0 + si;
        GridSpec gf;
        gf.n_s = gf.n_t = finest;
        gf.d = p.d;
        const SheetPath fine = generate_sheet(gf, row.seed);
        for (int gn : p.grids) {
            const SheetPath w = restrict_lattice(fine, finest / gn);
            const auto bd = BoundaryData::constant(p.d, p.xi);
            const auto zero_bd = BoundaryData::constant(p.d, 0.0);
            double worst = 0.0;
            try {
                const SolutionField ge = solve_goursat_euler(df, w, bd);
                const SolutionField pi = solve_picard(df, w, bd, p.tol, p.max_iter);
                for (std::size_t kk = 0; kk < ge.values.size(); ++kk)
                    worst = std::max(worst, std::fabs(ge.values[kk] - pi.values[kk]));
            } catch (const NonConvergenceError&) {
                ++row.failures;
            }
            for (int a = 0; a < p.starts; ++a) {
                std::vector<double> start(w.grid().value_count(), 0.0);
                switch (a) {
                    case 0: break;
                    case 1: std::fill(start.begin(), start.end(), 0.5); break;
                    case 2: std::fill(start.begin(), start.end(), -0.5); break;
                    case 3:
                        std::copy(w.values().begin(), w.values().end(), start.begin());
                        break;
                    default:
                        for (std::size_t kk = 0; kk < start.size(); ++kk)
                            start[kk] = -w.values()[kk];
                }
                try {
                    const SolutionField u =
                        solve_perturbation(df, w, zero_bd, start, p.tol, p.max_iter);
                    for (double v : u.values) worst = std::max(worst, std::fabs(v));
                } catch (const NonConvergenceError&) {
                    ++row.failures;
                }
            }
            row.max_diff.push_back(worst);
        }
        row.decreasing = true;
        // rounding floor: exact-case gaps are summation-order noise ~1e-15
        for (std::size_t gi = 1; gi < row.max_diff.size(); ++gi)
            if (row.max_diff[gi] > row.max_diff[gi - 1] + 1e-12) row.decreasing = false;
        rep.rows[si] = std::move(row);
    });

    for (const auto& row : rep.rows) {
        if (row.decreasing) ++rep.decreasing_count;
        rep.final_worst = std::max(rep.final_worst, row.max_diff.back());
    }
    return rep;
}

}  // namespace sheetfield
