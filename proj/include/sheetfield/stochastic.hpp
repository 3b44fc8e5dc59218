#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/drift.hpp"
#include "sheetfield/sheet.hpp"
#include "sheetfield/solver.hpp"

namespace sheetfield {

/// Scalar integrand f(s, t, x) for line integrals and the integration
/// formula checks.
using ScalarFieldFn = std::function<double(double s, double t, std::span<const double> x)>;

/// Left-corner (adapted) double Ito sum over the cells of [0, S) x [0, T):
///   sum_{i,j} f(s_i, t_j, W_{i,j}) . dW(cell i,j).
/// The left-corner convention is what makes the discrete stochastic
/// exponential an exact martingale; tests guard it against silent changes.
inline double double_ito(const DriftField& f, const SheetPath& sheet, double S, double T) {
    const GridSpec& g = sheet.grid();
    const int i_hi = g.snap_s(S), j_hi = g.snap_t(T);
    std::vector<double> x(g.d), val(g.d);
    double acc = 0.0;
    for (int i = 0; i < i_hi; ++i) {
        for (int j = 0; j < j_hi; ++j) {
            for (int c = 0; c < g.d; ++c) x[c] = sheet(i, j, c);
            f(g.s(i), g.t(j), x, val);
            double dot = 0.0;
            for (int c = 0; c < g.d; ++c) dot += val[c] * sheet.cell_increment(i, j, c);
            if (!std::isfinite(dot)) throw std::runtime_error("double_ito: non-finite integrand");
            acc += dot;
        }
    }
    return acc;
}

inline double double_ito(const DriftField& f, const SheetPath& sheet) {
    return double_ito(f, sheet, sheet.grid().s_max, sheet.grid().t_max);
}

enum class SWeight { None, InvS, InvSqrtS };

inline double apply_s_weight(SWeight w, double s) {
    switch (w) {
        case SWeight::None: return 1.0;
        case SWeight::InvS: return 1.0 / s;
        default: return 1.0 / std::sqrt(s);
    }
}

/// Iterated integral of f against the t-increments of one sheet component,
/// with an optional singular weight in s:
///   sum_i ds w(s_i) sum_j f(s_i, t_j, W_{i,j}) (W^(c)_{i,j+1} - W^(c)_{i,j}).
/// Ranges are node-aligned; a weighted range must keep s_lo at or above the
/// cutoff 4 ds that stands in for the integrable 1/s singularity.
inline double line_integral_t(const ScalarFieldFn& f, const SheetPath& sheet, int component,
                              SWeight weight, double s_lo, double s_hi, double t_lo,
                              double t_hi) {
    const GridSpec& g = sheet.grid();
    if (component < 0 || component >= g.d)
        throw std::invalid_argument("line_integral_t: component out of range");
    const int i_lo = g.snap_s(s_lo), i_hi = g.snap_s(s_hi);
    const int j_lo = g.snap_t(t_lo), j_hi = g.snap_t(t_hi);
    if (weight != SWeight::None && i_lo < 4)
        throw std::invalid_argument("line_integral_t: weighted s-range must start at s >= 4 ds");
    std::vector<double> x(g.d);
    double acc = 0.0;
    for (int i = i_lo; i < i_hi; ++i) {
        const double ws = g.ds() * apply_s_weight(weight, g.s(i));
        double inner = 0.0;
        for (int j = j_lo; j < j_hi; ++j) {
            for (int c = 0; c < g.d; ++c) x[c] = sheet(i, j, c);
            inner += f(g.s(i), g.t(j), x) * (sheet(i, j + 1, component) - sheet(i, j, component));
        }
        acc += ws * inner;
    }
    return acc;
}

/// Thrown when the stochastic exponential cannot be represented; carries the
/// log weight (the exponent) for diagnosis.
class GirsanovOverflowError : public std::runtime_error {
  public:
    explicit GirsanovOverflowError(double exponent)
        : std::runtime_error("stochastic exponential overflow, exponent " +
                             std::to_string(exponent)),
          log_weight(exponent) {}
    double log_weight;
};

struct GirsanovWeight {
    double log_weight = 0.0;
    double weight = 1.0;
};

/// Stochastic exponential of int int b(s,t,W) . dW over [0,S] x [0,T]:
///   exp( ito sum - 1/2 sum of |b(s_i,t_j,W_{i,j})|^2 dA ).
/// The quadratic term is evaluated at the same left-corner nodes as the Ito
/// sum. Pairing the two is what makes E[exponential] = 1 hold exactly at
/// every grid; a midpoint quadratic term leaves an O(1/n) bias along the
/// axes for drifts that are discontinuous at the origin, since the sheet
/// vanishes there.
inline GirsanovWeight girsanov_weight(const DriftField& b, const SheetPath& sheet, double S,
                                      double T) {
    const GridSpec& g = sheet.grid();
    const int i_hi = g.snap_s(S), j_hi = g.snap_t(T);
    const double area = g.cell_area();
    const double ito = double_ito(b, sheet, S, T);
    std::vector<double> x(g.d), val(g.d);
    double quad = 0.0;
    for (int i = 0; i < i_hi; ++i) {
        for (int j = 0; j < j_hi; ++j) {
            for (int c = 0; c < g.d; ++c) x[c] = sheet(i, j, c);
            b(g.s(i), g.t(j), x, val);
            double sq = 0.0;
            for (int c = 0; c < g.d; ++c) sq += val[c] * val[c];
            quad += sq * area;
        }
    }
    GirsanovWeight out;
    out.log_weight = ito - 0.5 * quad;
    if (out.log_weight > 709.0) throw GirsanovOverflowError(out.log_weight);
    out.weight = std::exp(out.log_weight);
    return out;
}

inline GirsanovWeight girsanov_weight(const DriftField& b, const SheetPath& sheet) {
    return girsanov_weight(b, sheet, sheet.grid().s_max, sheet.grid().t_max);
}

/// One replication of the local-time-space integration identity for a test
/// function f with available x-derivative. With What_{s,t} := W_{s,1-t} and
/// B the reversed sheet, the identity reads
///   int int df/dx_c (s1,t1,W) dt1 ds1
///     = - int int f(s1,t1,W) d_t W^(c) / s1
///       - int int f(s1,1-t1,What) d_t B^(c) / s1
///       + int int f(s1,1-t1,What) What^(c) / (s1 (1-t1)),
/// the reversed-time terms running over [1-t_hi, 1-t_lo]. Holds pathwise in
/// the continuum; discretely it is checked in Monte Carlo mean.
struct LocalTimeTerms {
    double lhs = 0.0;
    double forward = 0.0;   // adapted term against d_t W
    double reversed = 0.0;  // term against d_t B
    double weighted = 0.0;  // Lebesgue term with the What/(s(1-t)) weight
    double rhs() const { return -forward - reversed + weighted; }
    double defect() const { return lhs - rhs(); }
};

struct LocalTimeCutoffs {
    double s_min = 0.0;  // 0 picks the default 4 ds
    double s_max = 1.0;
    double t_lo = 0.0;   // 0 picks the default dt
    double t_hi = 0.0;   // 0 picks the default 1 - dt
};

inline LocalTimeTerms local_time_formula_check(const ScalarFieldFn& f, const ScalarFieldFn& dxf,
                                               const SheetPath& sheet, int component,
                                               LocalTimeCutoffs cut = {}) {
    const GridSpec& g = sheet.grid();
    if (g.t_max != 1.0)
        throw std::invalid_argument("local_time_formula_check: needs t_max == 1");
    const double ds = g.ds(), dt = g.dt();
    const double s_min = cut.s_min > 0.0 ? cut.s_min : 4.0 * ds;
    const double t_lo = cut.t_lo > 0.0 ? cut.t_lo : dt;
    const double t_hi = cut.t_hi > 0.0 ? cut.t_hi : 1.0 - dt;
    const int i_lo = g.snap_s(s_min), i_hi = g.snap_s(cut.s_max);
    const int j_lo = g.snap_t(t_lo), j_hi = g.snap_t(t_hi);
    if (i_lo < 4) throw std::invalid_argument("local_time_formula_check: s cutoff below 4 ds");
    if (j_lo < 1 || t_hi > 1.0 - dt + 1e-12)
        throw std::invalid_argument("local_time_formula_check: t range must stay in [dt, 1-dt]");

    LocalTimeTerms out;
    std::vector<double> x(g.d);

    // LHS: midpoint rule over the cut rectangle.
    for (int i = i_lo; i < i_hi; ++i) {
        for (int j = j_lo; j < j_hi; ++j) {
            for (int c = 0; c < g.d; ++c)
                x[c] = 0.25 * (sheet(i, j, c) + sheet(i + 1, j, c) + sheet(i, j + 1, c) +
                               sheet(i + 1, j + 1, c));
            out.lhs += dxf(g.s(i) + 0.5 * ds, g.t(j) + 0.5 * dt, x) * ds * dt;
        }
    }

    // Forward adapted term.
    out.forward = line_integral_t(f, sheet, component, SWeight::InvS, s_min, cut.s_max, t_lo, t_hi);

    // Reversal: B from the Dalang-Walsh decomposition, What(i, jr) = W(i, n_t - jr).
    const SheetPath brev = dalang_walsh(sheet, component);
    const int jr_lo = g.snap_t(1.0 - t_hi), jr_hi = g.snap_t(1.0 - t_lo);
    for (int i = i_lo; i < i_hi; ++i) {
        const double ws = ds / g.s(i);
        double inner = 0.0;
        for (int jr = jr_lo; jr < jr_hi; ++jr) {
            for (int c = 0; c < g.d; ++c) x[c] = sheet(i, g.n_t - jr, c);
            inner += f(g.s(i), 1.0 - g.t(jr), x) * (brev(i, jr + 1, 0) - brev(i, jr, 0));
        }
        out.reversed += ws * inner;
    }

    // Weighted Lebesgue term, 2-D trapezoid over the reversed rectangle.
    for (int i = i_lo; i <= i_hi; ++i) {
        const double wi = (i == i_lo || i == i_hi) ? 0.5 : 1.0;
        for (int jr = jr_lo; jr <= jr_hi; ++jr) {
            const double wj = (jr == jr_lo || jr == jr_hi) ? 0.5 : 1.0;
            for (int c = 0; c < g.d; ++c) x[c] = sheet(i, g.n_t - jr, c);
            const double what_c = sheet(i, g.n_t - jr, component);
            out.weighted += wi * wj * ds * dt * f(g.s(i), 1.0 - g.t(jr), x) * what_c /
                            (g.s(i) * (1.0 - g.t(jr)));
        }
    }
    return out;
}

}  // namespace sheetfield
