#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sheetfield {

/// Rectangular node lattice on [0, s_max] x [0, t_max] with n_s x n_t cells
/// and d field components per node.
struct GridSpec {
    int n_s = 1;
    int n_t = 1;
    double s_max = 1.0;
    double t_max = 1.0;
    int d = 1;

    void validate() const {
        if (n_s < 1 || n_t < 1) throw std::invalid_argument("GridSpec: cell counts must be >= 1");
        if (!(s_max > 0.0) || s_max > 1.0 || !(t_max > 0.0) || t_max > 1.0)
            throw std::invalid_argument("GridSpec: s_max, t_max must lie in (0, 1]");
        if (d < 1) throw std::invalid_argument("GridSpec: d must be >= 1");
    }

    double ds() const { return s_max / n_s; }
    double dt() const { return t_max / n_t; }
    double cell_area() const { return ds() * dt(); }
    double s(int i) const { return i * ds(); }
    double t(int j) const { return j * dt(); }
    int nodes_s() const { return n_s + 1; }
    int nodes_t() const { return n_t + 1; }
    std::size_t node_count() const { return static_cast<std::size_t>(nodes_s()) * nodes_t(); }
    std::size_t value_count() const { return node_count() * d; }

    /// Flat index of component c at node (i, j); s-major, then t, then component.
    std::size_t at(int i, int j, int c) const {
        return (static_cast<std::size_t>(i) * nodes_t() + j) * d + c;
    }

    bool same_lattice(const GridSpec& o) const {
        return n_s == o.n_s && n_t == o.n_t && s_max == o.s_max && t_max == o.t_max && d == o.d;
    }

    /// Nearest node index for a coordinate that is expected to sit on a node.
    /// Throws when the coordinate is off-node beyond a tiny snap tolerance.
    int snap_s(double s) const { return snap(s, ds(), n_s, "s"); }
    int snap_t(double t) const { return snap(t, dt(), n_t, "t"); }

  private:
    static int snap(double x, double h, int n, const char* label) {
        const double k = x / h;
        const int i = static_cast<int>(std::lround(k));
        if (i < 0 || i > n || std::fabs(k - i) > 1e-9 * (n > 0 ? n : 1))
            throw std::invalid_argument(std::string("coordinate not on a grid node in ") + label);
        return i;
    }
};

/// Axis-aligned rectangle with corners on grid nodes.
struct Rect {
    double s_lo = 0.0, s_hi = 0.0, t_lo = 0.0, t_hi = 0.0;

    void validate() const {
        if (s_lo > s_hi || t_lo > t_hi)
            throw std::invalid_argument("Rect: degenerate orientation (lo > hi)");
    }
};

}  // namespace sheetfield
