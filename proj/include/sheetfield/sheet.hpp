#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sheetfield/grid.hpp"
#include "sheetfield/rng.hpp"

namespace sheetfield {

/// One Brownian sheet sample on a grid. Node values are the 2-D prefix sum
/// of independent N(0, cell area) cell increments, so the field vanishes on
/// both axes and rectangle increments over disjoint cells are independent.
/// Immutable after construction; safe to share across threads.
class SheetPath {
  public:
    SheetPath(GridSpec grid, std::uint64_t seed, std::vector<double> values)
        : grid_(grid), seed_(seed), values_(std::move(values)) {
        grid_.validate();
        if (values_.size() != grid_.value_count())
            throw std::invalid_argument("SheetPath: value buffer size mismatch");
    }

    const GridSpec& grid() const { return grid_; }
    std::uint64_t seed() const { return seed_; }
    std::span<const double> values() const { return values_; }

    double operator()(int i, int j, int c) const { return values_[grid_.at(i, j, c)]; }

    /// W_{s2,t2} - W_{s1,t2} - W_{s2,t1} + W_{s1,t1}, per component.
    std::vector<double> rect_increment(const Rect& r) const {
        r.validate();
        const int i0 = grid_.snap_s(r.s_lo), i1 = grid_.snap_s(r.s_hi);
        const int j0 = grid_.snap_t(r.t_lo), j1 = grid_.snap_t(r.t_hi);
        std::vector<double> out(grid_.d);
        for (int c = 0; c < grid_.d; ++c)
            out[c] = (*this)(i1, j1, c) - (*this)(i0, j1, c) - (*this)(i1, j0, c) + (*this)(i0, j0, c);
        return out;
    }

    /// Increment over one grid cell whose lower-left node is (i, j).
    double cell_increment(int i, int j, int c) const {
        return (*this)(i + 1, j + 1, c) - (*this)(i, j + 1, c) - (*this)(i + 1, j, c) + (*this)(i, j, c);
    }

    /// Bilinear interpolation between nodes. Off-node values carry the usual
    /// O(sqrt(cell)) path error of a 1/2-Hoelder field; solvers never use this.
    double eval(double s, double t, int c) const {
        const double fs = std::min(std::max(s / grid_.ds(), 0.0), static_cast<double>(grid_.n_s));
        const double ft = std::min(std::max(t / grid_.dt(), 0.0), static_cast<double>(grid_.n_t));
        const int i = std::min(static_cast<int>(fs), grid_.n_s - 1);
        const int j = std::min(static_cast<int>(ft), grid_.n_t - 1);
        const double a = fs - i, b = ft - j;
        return (1 - a) * (1 - b) * (*this)(i, j, c) + a * (1 - b) * (*this)(i + 1, j, c) +
               (1 - a) * b * (*this)(i, j + 1, c) + a * b * (*this)(i + 1, j + 1, c);
    }

  private:
    GridSpec grid_;
    std::uint64_t seed_ = 0;
    std::vector<double> values_;
};

/// Samples a sheet. Cell increments are keyed by (seed, cell index,
/// component), so regeneration is bit-identical regardless of traversal
/// order or how replications are distributed over workers.
inline SheetPath generate_sheet(const GridSpec& grid, std::uint64_t seed) {
    grid.validate();
    const std::uint64_t key = rng::make_key(seed, rng::Domain::SheetCell);
    const double scale = std::sqrt(grid.cell_area());
    std::vector<double> v(grid.value_count(), 0.0);
    const int nt1 = grid.nodes_t();
    for (int i = 1; i <= grid.n_s; ++i) {
        for (int j = 1; j <= grid.n_t; ++j) {
            const std::uint64_t cell = static_cast<std::uint64_t>(i - 1) * grid.n_t + (j - 1);
            for (int c = 0; c < grid.d; ++c) {
                const double inc = scale * rng::gaussian(key, cell, static_cast<std::uint64_t>(c));
                v[(static_cast<std::size_t>(i) * nt1 + j) * grid.d + c] =
                    inc + v[(static_cast<std::size_t>(i - 1) * nt1 + j) * grid.d + c] +
                    v[(static_cast<std::size_t>(i) * nt1 + j - 1) * grid.d + c] -
                    v[(static_cast<std::size_t>(i - 1) * nt1 + j - 1) * grid.d + c];
            }
        }
    }
    return SheetPath(grid, seed, std::move(v));
}

/// Rescaled window process: node (s, t) of the result holds the increment of
/// the source over [a', a' + eps'*s] x [a, a + eps*t]. The window corners
/// must land on source nodes. The result lives on [0,1]^2 and is again a
/// sheet with cell variance eps*eps' times the unit one.
inline SheetPath rescale(const SheetPath& path, double a_prime, double a,
                         double eps_prime, double eps) {
    const GridSpec& g = path.grid();
    if (eps_prime < 0.0 || eps < 0.0)
        throw std::invalid_argument("rescale: eps, eps' must be nonnegative");
    const int i0 = g.snap_s(a_prime);
    const int j0 = g.snap_t(a);
    // Image corner (a' + eps', a + eps) must land on source nodes; the
    // interior output nodes are then consecutive source nodes of the window.
    const int iw = eps_prime == 0.0 ? 0 : g.snap_s(a_prime + eps_prime) - i0;
    const int jw = eps == 0.0 ? 0 : g.snap_t(a + eps) - j0;
    if (iw < 0 || jw < 0 || i0 + iw > g.n_s || j0 + jw > g.n_t)
        throw std::invalid_argument("rescale: window leaves the source domain");

    GridSpec out = g;
    out.n_s = std::max(iw, 1);
    out.n_t = std::max(jw, 1);
    out.s_max = 1.0;
    out.t_max = 1.0;
    std::vector<double> v(out.value_count(), 0.0);
    for (int i = 0; i <= out.n_s; ++i) {
        const int si = i0 + (iw == 0 ? 0 : i);
        for (int j = 0; j <= out.n_t; ++j) {
            const int tj = j0 + (jw == 0 ? 0 : j);
            for (int c = 0; c < g.d; ++c) {
                v[out.at(i, j, c)] =
                    path(si, tj, c) - path(i0, tj, c) - path(si, j0, c) + path(i0, j0, c);
            }
        }
    }
    return SheetPath(out, path.seed(), std::move(v));
}

/// Restriction of a sheet to every `factor`-th node. The restriction of a
/// sheet is again a sheet on the coarser lattice driven by the same path,
/// which is how refinement studies couple their grids.
inline SheetPath restrict_lattice(const SheetPath& fine, int factor) {
    const GridSpec& g = fine.grid();
    if (factor < 1 || g.n_s % factor != 0 || g.n_t % factor != 0)
        throw std::invalid_argument("restrict_lattice: factor must divide both cell counts");
    GridSpec out = g;
    out.n_s = g.n_s / factor;
    out.n_t = g.n_t / factor;
    std::vector<double> v(out.value_count());
    for (int i = 0; i <= out.n_s; ++i)
        for (int j = 0; j <= out.n_t; ++j)
            for (int c = 0; c < g.d; ++c)
                v[out.at(i, j, c)] = fine(i * factor, j * factor, c);
    return SheetPath(out, fine.seed(), std::move(v));
}

/// Time reversal about t = 1 for one component:
///   B_{s,t} = W_{s,1-t} - W_{s,1} + int_0^t W_{s,1-u} / (1-u) du,
/// with the correction integral evaluated by the trapezoid rule on nodes.
/// B is itself a standard sheet with respect to the reversed filtration.
/// Output is truncated to t <= 1 - dt to stay clear of the 1/(1-u)
/// singularity; the last row is never needed by the integration formulas.
inline SheetPath dalang_walsh(const SheetPath& path, int component) {
    const GridSpec& g = path.grid();
    if (g.t_max != 1.0) throw std::invalid_argument("dalang_walsh: requires t_max == 1");
    if (component < 0 || component >= g.d)
        throw std::invalid_argument("dalang_walsh: component out of range");

    GridSpec out = g;
    out.d = 1;
    out.n_t = g.n_t - 1;           // truncated to t <= 1 - dt
    out.t_max = 1.0 - g.dt();
    if (out.n_t < 1) throw std::invalid_argument("dalang_walsh: grid too coarse");

    const double dt = g.dt();
    std::vector<double> v(out.value_count(), 0.0);
    for (int i = 0; i <= g.n_s; ++i) {
        double integral = 0.0;  // trapezoid of W_{s,1-u}/(1-u) over [0, t_j]
        double prev = path(i, g.n_t, component) / 1.0;  // integrand at u = 0
        const double w_s1 = path(i, g.n_t, component);
        v[out.at(i, 0, 0)] = 0.0;  // exact: W_{s,1} - W_{s,1} + 0
        for (int j = 1; j <= out.n_t; ++j) {
            const double one_minus_u = 1.0 - g.t(j);
            const double cur = path(i, g.n_t - j, component) / one_minus_u;
            integral += 0.5 * dt * (prev + cur);
            prev = cur;
            v[out.at(i, j, 0)] = path(i, g.n_t - j, component) - w_s1 + integral;
        }
    }
    return SheetPath(out, path.seed(), std::move(v));
}

}  // namespace sheetfield
