#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/drift.hpp"
#include "sheetfield/grid.hpp"
#include "sheetfield/sheet.hpp"

namespace sheetfield {

/// Callable drift with an id, the common currency of the solvers. Built
/// from either a raw pair or a smoothed drift.
struct DriftField {
    std::string id;
    std::function<void(double, double, std::span<const double>, std::span<double>)> fn;

    void operator()(double s, double t, std::span<const double> x, std::span<double> out) const {
        fn(s, t, x, out);
    }
};

inline DriftField drift_field(const MonotonePair& pair) {
    return {pair.id, [pair](double s, double t, std::span<const double> x, std::span<double> out) {
                pair.eval(s, t, x, out);
            }};
}

inline DriftField drift_field(const SmoothedDrift& sd) {
    auto shared = std::make_shared<SmoothedDrift>(sd);
    return {sd.source().id + "_n" + std::to_string(sd.level()),
            [shared](double s, double t, std::span<const double> x, std::span<double> out) {
                shared->value(s, t, x, out);
            }};
}

/// Data on the two axes: either a constant corner value or a pair of curves
/// sigma(t) = X(0, t), tau(s) = X(s, 0) agreeing at the corner.
class BoundaryData {
  public:
    using AxisFn = std::function<void(double, std::span<double>)>;

    static BoundaryData constant(std::vector<double> xi) {
        BoundaryData b;
        b.d_ = static_cast<int>(xi.size());
        b.constant_ = std::move(xi);
        return b;
    }

    static BoundaryData constant(int d, double xi) {
        return constant(std::vector<double>(d, xi));
    }

    static BoundaryData axes(int d, AxisFn sigma, AxisFn tau) {
        BoundaryData b;
        b.d_ = d;
        b.sigma_ = std::move(sigma);
        b.tau_ = std::move(tau);
        std::vector<double> s0(d), t0(d);
        b.sigma_(0.0, s0);
        b.tau_(0.0, t0);
        for (int j = 0; j < d; ++j)
            if (std::fabs(s0[j] - t0[j]) > 1e-12)
                throw std::invalid_argument("BoundaryData: sigma(0) != tau(0)");
        return b;
    }

    int dim() const { return d_; }

    void sigma(double t, std::span<double> out) const {
        if (sigma_) sigma_(t, out);
        else std::copy(constant_.begin(), constant_.end(), out.begin());
    }
    void tau(double s, std::span<double> out) const {
        if (tau_) tau_(s, out);
        else std::copy(constant_.begin(), constant_.end(), out.begin());
    }

    /// The additive extension tau(s) + sigma(t) - corner that the integral
    /// equation adds to the double integral plus noise.
    void extension(double s, double t, std::span<double> out) const {
        if (!sigma_) {
            std::copy(constant_.begin(), constant_.end(), out.begin());
            return;
        }
        std::vector<double> sig(d_), corner(d_);
        sigma_(t, sig);
        sigma_(0.0, corner);
        tau_(s, out);
        for (int j = 0; j < d_; ++j) out[j] += sig[j] - corner[j];
    }

  private:
    int d_ = 0;
    std::vector<double> constant_;
    AxisFn sigma_, tau_;
};

enum class Scheme { GoursatEuler, Picard };

inline const char* scheme_name(Scheme s) {
    return s == Scheme::GoursatEuler ? "goursat_euler" : "picard";
}

struct SolutionField {
    GridSpec grid;
    std::vector<double> values;
    Scheme scheme = Scheme::GoursatEuler;
    int iterations = 0;
    double residual = 0.0;
    std::string drift_id;
    std::uint64_t sheet_seed = 0;

    double operator()(int i, int j, int c) const { return values[grid.at(i, j, c)]; }
};

/// Thrown when a sweep produces a non-finite value.
class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(int i, int j)
        : std::runtime_error("solver diverged at node (" + std::to_string(i) + ", " +
                             std::to_string(j) + ")"),
          node_i(i), node_j(j) {}
    int node_i, node_j;
};

/// Thrown when fixed-point iteration hits max_iter; carries the last iterate.
class NonConvergenceError : public std::runtime_error {
  public:
    NonConvergenceError(SolutionField last, double change)
        : std::runtime_error("fixed-point iteration did not converge (last change " +
                             std::to_string(change) + ")"),
          last_iterate(std::make_shared<SolutionField>(std::move(last))),
          last_change(change) {}
    std::shared_ptr<SolutionField> last_iterate;
    double last_change;
};

namespace detail {

inline void fill_boundary(const GridSpec& g, const BoundaryData& bd, std::vector<double>& v) {
    std::vector<double> buf(g.d);
    for (int i = 0; i <= g.n_s; ++i) {
        bd.tau(g.s(i), buf);
        for (int c = 0; c < g.d; ++c) v[g.at(i, 0, c)] = buf[c];
    }
    for (int j = 0; j <= g.n_t; ++j) {
        bd.sigma(g.t(j), buf);
        for (int c = 0; c < g.d; ++c) v[g.at(0, j, c)] = buf[c];
    }
}

}  // namespace detail

/// Single left-corner sweep of the integral equation
///   X(i+1,j+1) = X(i+1,j) + X(i,j+1) - X(i,j) + b(s_i, t_j, X(i,j)) dA + dW.
/// Node-exact for drifts that do not depend on x (the quadrature of a
/// constant is exact and the sweep telescopes onto boundary + integral + W).
inline SolutionField solve_goursat_euler(const DriftField& drift, const SheetPath& sheet,
                                         const BoundaryData& boundary) {
    const GridSpec& g = sheet.grid();
    if (boundary.dim() != g.d)
        throw std::invalid_argument("solve_goursat_euler: boundary dimension mismatch");
    SolutionField out;
    out.grid = g;
    out.scheme = Scheme::GoursatEuler;
    out.iterations = 1;
    out.drift_id = drift.id;
    out.sheet_seed = sheet.seed();
    out.values.assign(g.value_count(), 0.0);
    detail::fill_boundary(g, boundary, out.values);

    const double area = g.cell_area();
    std::vector<double> x(g.d), b(g.d);
    for (int i = 0; i < g.n_s; ++i) {
        for (int j = 0; j < g.n_t; ++j) {
            for (int c = 0; c < g.d; ++c) x[c] = out.values[g.at(i, j, c)];
            drift(g.s(i), g.t(j), x, b);
            for (int c = 0; c < g.d; ++c) {
                const double val = out.values[g.at(i + 1, j, c)] + out.values[g.at(i, j + 1, c)] -
                                   out.values[g.at(i, j, c)] + b[c] * area +
                                   sheet.cell_increment(i, j, c);
                if (!std::isfinite(val)) throw DivergenceError(i + 1, j + 1);
                out.values[g.at(i + 1, j + 1, c)] = val;
            }
        }
    }
    return out;
}

namespace detail {

/// One application of the Picard map with the midpoint rule:
/// out = extension + cumulative 2-D midpoint sum of b(., ., cur) + W.
/// `extension` already holds boundary-extension node values; `noise` may be
/// null (perturbation equation differences the drift against the sheet
/// instead of adding it).
template <typename CellFn>
void picard_apply(const GridSpec& g, const std::vector<double>& extension, CellFn&& cell_value,
                  const SheetPath* noise, std::vector<double>& out) {
    const int d = g.d;
    // Column-running partial sums make the cumulative cell sum one pass.
    std::vector<double> colsum(static_cast<std::size_t>(g.n_t + 1) * d, 0.0);
    std::vector<double> cell(d);
    out.assign(g.value_count(), 0.0);
    for (int i = 0; i <= g.n_s; ++i) {
        if (i > 0) {
            // colsum[j] accumulates sums over cells (i-1, j') for j' < j.
            std::vector<double> run(d, 0.0);
            for (int j = 1; j <= g.n_t; ++j) {
                cell_value(i - 1, j - 1, cell);
                for (int c = 0; c < d; ++c) {
                    run[c] += cell[c];
                    colsum[static_cast<std::size_t>(j) * d + c] += run[c];
                }
            }
        }
        for (int j = 0; j <= g.n_t; ++j) {
            for (int c = 0; c < d; ++c) {
                double val = extension[g.at(i, j, c)] + colsum[static_cast<std::size_t>(j) * d + c];
                if (noise) val += (*noise)(i, j, c);
                if (!std::isfinite(val)) throw DivergenceError(i, j);
                out[g.at(i, j, c)] = val;
            }
        }
    }
}

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
    return m;
}

}  // namespace detail

/// Picard fixed-point iteration with the 2-D midpoint rule, starting from
/// the drift-free solution. Stops when the sup-node change drops below tol.
inline SolutionField solve_picard(const DriftField& drift, const SheetPath& sheet,
                                  const BoundaryData& boundary, double tol = 1e-10,
                                  int max_iter = 64) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_picard: tol must be > 0");
    const GridSpec& g = sheet.grid();
    if (boundary.dim() != g.d)
        throw std::invalid_argument("solve_picard: boundary dimension mismatch");

    std::vector<double> extension(g.value_count());
    {
        std::vector<double> buf(g.d);
        for (int i = 0; i <= g.n_s; ++i)
            for (int j = 0; j <= g.n_t; ++j) {
                boundary.extension(g.s(i), g.t(j), buf);
                for (int c = 0; c < g.d; ++c) extension[g.at(i, j, c)] = buf[c];
            }
    }

    std::vector<double> cur(g.value_count());
    for (std::size_t k = 0; k < cur.size(); ++k) cur[k] = extension[k];
    for (int i = 0; i <= g.n_s; ++i)
        for (int j = 0; j <= g.n_t; ++j)
            for (int c = 0; c < g.d; ++c) cur[g.at(i, j, c)] += sheet(i, j, c);

    const double area = g.cell_area();
    std::vector<double> next, xm(g.d), bm(g.d);
    double change = 0.0;
    for (int iter = 1; iter <= max_iter; ++iter) {
        auto cell_value = [&](int i, int j, std::vector<double>& cell) {
            for (int c = 0; c < g.d; ++c)
                xm[c] = 0.25 * (cur[g.at(i, j, c)] + cur[g.at(i + 1, j, c)] +
                                cur[g.at(i, j + 1, c)] + cur[g.at(i + 1, j + 1, c)]);
            drift(g.s(i) + 0.5 * g.ds(), g.t(j) + 0.5 * g.dt(), xm, bm);
            for (int c = 0; c < g.d; ++c) cell[c] = bm[c] * area;
        };
        detail::picard_apply(g, extension, cell_value, &sheet, next);
        change = detail::sup_diff(next, cur);
        cur.swap(next);
        if (change < tol) {
            SolutionField out;
            out.grid = g;
            out.values = std::move(cur);
            out.scheme = Scheme::Picard;
            out.iterations = iter;
            out.drift_id = drift.id;
            out.sheet_seed = sheet.seed();
            out.residual = change;
            return out;
        }
    }
    SolutionField last;
    last.grid = g;
    last.values = std::move(cur);
    last.scheme = Scheme::Picard;
    last.iterations = max_iter;
    last.drift_id = drift.id;
    last.sheet_seed = sheet.seed();
    throw NonConvergenceError(std::move(last), change);
}

/// Sup-node defect of the integral equation. The boundary extension is read
/// off the field's own axis rows, and the quadrature follows the field's
/// scheme (left corner for the sweep, midpoint for Picard).
inline double residual(const SolutionField& field, const DriftField& drift,
                       const SheetPath& sheet) {
    const GridSpec& g = field.grid;
    if (!g.same_lattice(sheet.grid())) throw std::invalid_argument("residual: grid mismatch");
    const double area = g.cell_area();
    const int d = g.d;
    std::vector<double> x(d), b(d);
    double worst = 0.0;
    // Row-by-row cumulative sum of drift cell values, then compare nodes.
    std::vector<double> colsum(static_cast<std::size_t>(g.n_t + 1) * d, 0.0);
    for (int i = 0; i <= g.n_s; ++i) {
        if (i > 0) {
            std::vector<double> run(d, 0.0);
            for (int j = 1; j <= g.n_t; ++j) {
                if (field.scheme == Scheme::Picard) {
                    for (int c = 0; c < d; ++c)
                        x[c] = 0.25 * (field(i - 1, j - 1, c) + field(i, j - 1, c) +
                                       field(i - 1, j, c) + field(i, j, c));
                    drift(g.s(i - 1) + 0.5 * g.ds(), g.t(j - 1) + 0.5 * g.dt(), x, b);
                } else {
                    for (int c = 0; c < d; ++c) x[c] = field(i - 1, j - 1, c);
                    drift(g.s(i - 1), g.t(j - 1), x, b);
                }
                for (int c = 0; c < d; ++c) {
                    run[c] += b[c] * area;
                    colsum[static_cast<std::size_t>(j) * d + c] += run[c];
                }
            }
        }
        for (int j = 0; j <= g.n_t; ++j) {
            for (int c = 0; c < d; ++c) {
                const double ext = field(i, 0, c) + field(0, j, c) - field(0, 0, c);
                const double defect = field(i, j, c) - ext -
                                      colsum[static_cast<std::size_t>(j) * d + c] - sheet(i, j, c);
                worst = std::max(worst, std::fabs(defect));
            }
        }
    }
    return worst;
}

/// Picard iteration for the perturbation equation
///   u(s,t) = u(s,0) + u(0,t) - u(0,0)
///            + int int { b(s1,t1, W + u) - b(s1,t1, W) } ds1 dt1.
/// Nonzero boundary data is what the Gronwall experiment feeds in; the
/// uniqueness experiments use zero boundary and assorted interior starts.
inline SolutionField solve_perturbation(const DriftField& drift, const SheetPath& sheet,
                                        const BoundaryData& u_boundary,
                                        const std::vector<double>& start, double tol = 1e-10,
                                        int max_iter = 64) {
    if (!(tol > 0.0)) throw std::invalid_argument("solve_perturbation: tol must be > 0");
    const GridSpec& g = sheet.grid();
    if (u_boundary.dim() != g.d)
        throw std::invalid_argument("solve_perturbation: boundary dimension mismatch");
    if (!start.empty() && start.size() != g.value_count())
        throw std::invalid_argument("solve_perturbation: start size mismatch");

    std::vector<double> extension(g.value_count());
    {
        std::vector<double> buf(g.d);
        for (int i = 0; i <= g.n_s; ++i)
            for (int j = 0; j <= g.n_t; ++j) {
                u_boundary.extension(g.s(i), g.t(j), buf);
                for (int c = 0; c < g.d; ++c) extension[g.at(i, j, c)] = buf[c];
            }
    }

    std::vector<double> cur = start.empty() ? extension : start;
    const double area = g.cell_area();
    std::vector<double> next, wm(g.d), um(g.d), b0(g.d), b1(g.d);
    double change = 0.0;
    for (int iter = 1; iter <= max_iter; ++iter) {
        auto cell_value = [&](int i, int j, std::vector<double>& cell) {
            for (int c = 0; c < g.d; ++c) {
                wm[c] = 0.25 * (sheet(i, j, c) + sheet(i + 1, j, c) + sheet(i, j + 1, c) +
                                sheet(i + 1, j + 1, c));
                um[c] = wm[c] + 0.25 * (cur[g.at(i, j, c)] + cur[g.at(i + 1, j, c)] +
                                        cur[g.at(i, j + 1, c)] + cur[g.at(i + 1, j + 1, c)]);
            }
            const double sm = g.s(i) + 0.5 * g.ds(), tm = g.t(j) + 0.5 * g.dt();
            drift(sm, tm, um, b1);
            drift(sm, tm, wm, b0);
            for (int c = 0; c < g.d; ++c) cell[c] = (b1[c] - b0[c]) * area;
        };
        detail::picard_apply(g, extension, cell_value, nullptr, next);
        change = detail::sup_diff(next, cur);
        cur.swap(next);
        if (change < tol) {
            SolutionField out;
            out.grid = g;
            out.values = std::move(cur);
            out.scheme = Scheme::Picard;
            out.iterations = iter;
            out.drift_id = drift.id;
            out.sheet_seed = sheet.seed();
            out.residual = change;
            return out;
        }
    }
    SolutionField last;
    last.grid = g;
    last.values = std::move(cur);
    last.scheme = Scheme::Picard;
    last.iterations = max_iter;
    last.drift_id = drift.id;
    last.sheet_seed = sheet.seed();
    throw NonConvergenceError(std::move(last), change);
}

// ---------------------------------------------------------------------------
// pi/4 rotation onto wave coordinates
// ---------------------------------------------------------------------------

/// Field in rotated coordinates Y(rho, theta) = X((theta+rho)/sqrt2,
/// (theta-rho)/sqrt2), sampled on a diagonal lattice of spacing
/// h / sqrt2 (h the source cell side). Lattice points with even index
/// parity coincide with source nodes; the rest are bilinear resamples.
struct RotatedField {
    double delta = 0.0;  // lattice spacing in rho and theta
    int half_width = 0;  // rho index range is [-half_width, half_width]
    int theta_count = 0; // theta index range is [0, theta_count]
    int d = 1;
    std::vector<double> values;  // (2*half_width+1) x (theta_count+1) x d

    double rho(int k) const { return k * delta; }
    double theta(int l) const { return l * delta; }

    bool inside(int k, int l) const {
        return l >= std::abs(k) && l + std::abs(k) <= theta_count && l >= 0;
    }

    std::size_t at(int k, int l, int c) const {
        return (static_cast<std::size_t>(k + half_width) * (theta_count + 1) + l) * d + c;
    }

    double value(int k, int l, int c) const {
        if (!inside(k, l))
            throw std::invalid_argument("RotatedField: query outside the rotated triangle");
        return values[at(k, l, c)];
    }

    /// Goursat edge data: the rho = +theta edge carries X(sqrt2 theta, 0),
    /// the rho = -theta edge carries X(0, sqrt2 theta).
    double edge_plus(int l, int c) const { return value(l, l, c); }
    double edge_minus(int l, int c) const { return value(-l, l, c); }
};

inline RotatedField rotate_to_wave(const SolutionField& field) {
    const GridSpec& g = field.grid;
    if (g.s_max != 1.0 || g.t_max != 1.0 || g.n_s != g.n_t)
        throw std::invalid_argument("rotate_to_wave: field must live on a square [0,1]^2 lattice");
    const int n = g.n_s;
    const double h = g.ds();
    RotatedField out;
    out.delta = h / std::sqrt(2.0);
    out.half_width = n;
    out.theta_count = 2 * n;
    out.d = g.d;
    out.values.assign(static_cast<std::size_t>(2 * n + 1) * (2 * n + 1) * g.d, 0.0);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (int k = -n; k <= n; ++k) {
        for (int l = std::abs(k); l + std::abs(k) <= 2 * n; ++l) {
            const double rho = k * out.delta, theta = l * out.delta;
            const double s = (theta + rho) * inv_sqrt2;
            const double t = (theta - rho) * inv_sqrt2;
            if ((k + l) % 2 == 0) {
                // Exact source node: s/h = (l+k)/2, t/h = (l-k)/2.
                const int i = (l + k) / 2, j = (l - k) / 2;
                for (int c = 0; c < g.d; ++c) out.values[out.at(k, l, c)] = field(i, j, c);
            } else {
                for (int c = 0; c < g.d; ++c) {
                    // Bilinear resample (here a 4-corner average of the
                    // surrounding cell, since the point is a cell center).
                    const double fs = std::clamp(s / h, 0.0, static_cast<double>(n));
                    const double ft = std::clamp(t / h, 0.0, static_cast<double>(n));
                    const int i = std::min(static_cast<int>(fs), n - 1);
                    const int j = std::min(static_cast<int>(ft), n - 1);
                    const double a = fs - i, bb = ft - j;
                    out.values[out.at(k, l, c)] =
                        (1 - a) * (1 - bb) * field(i, j, c) + a * (1 - bb) * field(i + 1, j, c) +
                        (1 - a) * bb * field(i, j + 1, c) + a * bb * field(i + 1, j + 1, c);
                }
            }
        }
    }
    return out;
}

/// Inverse resample back onto the source lattice. Together with
/// rotate_to_wave this is the identity up to the bilinear error at
/// odd-parity lattice points.
inline std::vector<double> unrotate(const RotatedField& rot, const GridSpec& g) {
    if (rot.theta_count != g.n_s + g.n_t || g.n_s != g.n_t)
        throw std::invalid_argument("unrotate: lattice mismatch");
    std::vector<double> out(g.value_count(), 0.0);
    for (int i = 0; i <= g.n_s; ++i) {
        for (int j = 0; j <= g.n_t; ++j) {
            const int k = i - j, l = i + j;  // exact rotated lattice indices
            for (int c = 0; c < g.d; ++c) out[g.at(i, j, c)] = rot.value(k, l, c);
        }
    }
    return out;
}

}  // namespace sheetfield
