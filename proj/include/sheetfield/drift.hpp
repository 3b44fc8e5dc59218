#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/rng.hpp"

namespace sheetfield {

/// Vector drift evaluator: out_j = b_j(s, t, x). Must be pure and safe for
/// concurrent calls.
using DriftFn =
    std::function<void(double s, double t, std::span<const double> x, std::span<double> out)>;

/// Scalar profile f applied componentwise, b_j(x) = f(x_j). When a pair
/// carries profiles the mollifier can work on the 1-D profile instead of the
/// full tensor kernel, which is what makes smoothed drifts cheap to sample.
using ScalarFn = std::function<double(double)>;

struct Growth {
    enum class Kind { Bounded, LinearGrowth };
    Kind kind = Kind::Bounded;
    double bound = 1.0;  // M_inf in Bounded mode, M in LinearGrowth mode

    static Growth bounded(double m_inf) { return {Kind::Bounded, m_inf}; }
    static Growth linear(double m) { return {Kind::LinearGrowth, m}; }
};

/// Drift b = b_hat - b_check with componentwise nondecreasing halves.
/// `kinks` lists x-locations (per axis, shared across axes) where either
/// half is discontinuous or non-smooth; the mollifier splits its quadrature
/// there so smoothed values vary smoothly in x. `hat_profile`/`check_profile`
/// are optional scalar profiles when the drift acts componentwise.
struct MonotonePair {
    std::string id;
    int dim = 1;
    DriftFn b_hat;
    DriftFn b_check;
    Growth growth;
    std::vector<double> kinks;
    ScalarFn hat_profile;
    ScalarFn check_profile;

    bool componentwise() const { return static_cast<bool>(hat_profile); }

    void eval(double s, double t, std::span<const double> x, std::span<double> out) const {
        std::vector<double> tmp(dim);
        b_hat(s, t, x, out);
        b_check(s, t, x, tmp);
        for (int j = 0; j < dim; ++j) out[j] -= tmp[j];
    }
};

/// Wraps a scalar profile into a componentwise DriftFn.
inline DriftFn componentwise_fn(ScalarFn f) {
    return [f = std::move(f)](double, double, std::span<const double> x, std::span<double> out) {
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = f(x[j]);
    };
}

// ---------------------------------------------------------------------------
// Hypothesis validation (sampled; evaluators are black boxes)
// ---------------------------------------------------------------------------

struct ValidationIssue {
    enum class Kind { HatMonotonicity, CheckMonotonicity, GrowthBound, SupBound };
    Kind kind;
    double s, t;
    std::vector<double> x, y;  // witness pair (y empty for bound violations)
    double lhs, rhs;           // violated comparison, lhs vs rhs
};

struct ValidationReport {
    std::size_t samples = 0;
    std::vector<ValidationIssue> violations;
    bool passed() const { return violations.empty(); }
};

/// Draws `sample_count` ordered pairs x <= y (componentwise) inside
/// [-box, box]^d and checks monotonicity of both halves plus the growth
/// bound on b. The growth bound uses the max norm on b (the norm the
/// componentwise estimates are stated in), so a bounded drift with
/// per-component bound M passes in every dimension.
inline ValidationReport validate(const MonotonePair& pair, std::size_t sample_count,
                                 std::uint64_t seed, double box = 2.0,
                                 std::size_t max_violations = 32) {
    const int d = pair.dim;
    const std::uint64_t key = rng::make_key(seed, rng::Domain::ValidateSample);
    ValidationReport report;
    report.samples = sample_count;
    std::vector<double> x(d), y(d), bx(d), by(d), cx(d), cy(d);
    for (std::size_t k = 0; k < sample_count; ++k) {
        const double s = rng::uniform(key, k, 0, 0.0, 1.0);
        const double t = rng::uniform(key, k, 1, 0.0, 1.0);
        for (int i = 0; i < d; ++i) {
            x[i] = rng::uniform(key, k, 2 + 2 * i, -box, box);
            const double off = rng::uniform(key, k, 3 + 2 * i, 0.0, box);
            y[i] = std::min(x[i] + off, box);
        }
        pair.b_hat(s, t, x, bx);
        pair.b_hat(s, t, y, by);
        pair.b_check(s, t, x, cx);
        pair.b_check(s, t, y, cy);
        for (int j = 0; j < d && report.violations.size() < max_violations; ++j) {
            if (bx[j] > by[j] + 1e-12)
                report.violations.push_back({ValidationIssue::Kind::HatMonotonicity, s, t, x, y, bx[j], by[j]});
            if (cx[j] > cy[j] + 1e-12)
                report.violations.push_back({ValidationIssue::Kind::CheckMonotonicity, s, t, x, y, cx[j], cy[j]});
        }
        double max_b = 0, norm_x = 0, sup_half = 0;
        for (int j = 0; j < d; ++j) {
            max_b = std::max(max_b, std::fabs(bx[j] - cx[j]));
            norm_x += x[j] * x[j];
            sup_half = std::max({sup_half, std::fabs(bx[j]), std::fabs(cx[j])});
        }
        norm_x = std::sqrt(norm_x);
        const double m = pair.growth.bound;
        if (report.violations.size() < max_violations) {
            if (max_b > m * (1.0 + norm_x) + 1e-12)
                report.violations.push_back({ValidationIssue::Kind::GrowthBound, s, t, x, {},
                                             max_b, m * (1.0 + norm_x)});
            else if (pair.growth.kind == Growth::Kind::Bounded && sup_half > m + 1e-12)
                report.violations.push_back({ValidationIssue::Kind::SupBound, s, t, x, {}, sup_half, m});
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Mollification
// ---------------------------------------------------------------------------

namespace detail {

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence. Nodes come out symmetric in exact pairs.
struct GaussLegendre {
    std::vector<double> nodes, weights;

    explicit GaussLegendre(int q) {
        nodes.resize(q);
        weights.resize(q);
        for (int k = 0; k < (q + 1) / 2; ++k) {
            double x = std::cos(3.14159265358979323846 * (k + 0.75) / (q + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int m = 2; m <= q; ++m) {
                    const double p2 = ((2 * m - 1) * x * p1 - (m - 1) * p0) / m;
                    p0 = p1;
                    p1 = p2;
                }
                dp = q * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::fabs(dx) < 1e-15) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[k] = -x;
            weights[k] = w;
            nodes[q - 1 - k] = x;
            weights[q - 1 - k] = w;
        }
        if (q % 2 == 1) nodes[q / 2] = 0.0;
    }
};

inline double bump(double u) {
    const double w = 1.0 - u * u;
    return w > 0.0 ? std::exp(-1.0 / w) : 0.0;
}

inline double bump_prime(double u) {
    const double w = 1.0 - u * u;
    if (w <= 0.0) return 0.0;
    return bump(u) * (-2.0 * u) / (w * w);
}

inline double bump_second(double u) {
    const double w = 1.0 - u * u;
    if (w <= 0.0) return 0.0;
    const double iw2 = 1.0 / (w * w);
    return bump(u) * (4.0 * u * u * iw2 * iw2 - 2.0 * iw2 - 8.0 * u * u * iw2 / w);
}

/// Panel cuts for composite quadrature over [a, b] inside [-1, 1]. Panels
/// touching the endpoints of the bump's support are refined geometrically;
/// everything there is analytic but extremely flat, and the grading is what
/// buys ~1e-13 relative accuracy out of order-16 panels.
inline std::vector<double> graded_cuts(double a, double b) {
    std::vector<double> cuts;
    const int base = 4;
    const bool grade_lo = a <= -1.0 + 1e-14;
    const bool grade_hi = b >= 1.0 - 1e-14;
    std::vector<double> coarse(base + 1);
    for (int i = 0; i <= base; ++i) coarse[i] = a + (b - a) * i / base;
    if (grade_lo) {
        cuts.push_back(-1.0);
        std::vector<double> down;
        double x = coarse[1];
        while (x + 1.0 > 5e-4) {
            down.push_back(x);
            x = -1.0 + (x + 1.0) / 2.0;
        }
        down.push_back(x);
        for (auto it = down.rbegin(); it != down.rend(); ++it) cuts.push_back(*it);
    } else {
        cuts.push_back(coarse[0]);
        cuts.push_back(coarse[1]);
    }
    for (int i = 2; i < base; ++i) cuts.push_back(coarse[i]);
    if (grade_hi) {
        double x = coarse[base - 1];
        cuts.push_back(x);
        while (1.0 - x > 5e-4) {
            x = 1.0 - (1.0 - x) / 2.0;
            cuts.push_back(x);
        }
        cuts.push_back(b);
    } else {
        cuts.push_back(coarse[base]);
    }
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    return cuts;
}

/// Discrete kernel on [-1, 1]: nodes and weights for one axis and one
/// derivative order of the bump. Weights of the order-0 kernel are
/// nonnegative and normalized to unit mass; higher orders share the same
/// normalization so they remain derivatives of the discretized kernel.
struct KernelRule {
    std::vector<double> u, w;
};

inline KernelRule kernel_rule(const GaussLegendre& gl, std::span<const double> splits, int order,
                              double scale) {
    std::vector<double> cuts{-1.0};
    for (double s : splits)
        if (s > -1.0 && s < 1.0) cuts.push_back(s);
    cuts.push_back(1.0);
    std::sort(cuts.begin(), cuts.end());

    KernelRule rule;
    double mass = 0.0;
    std::vector<double> raw;
    const int q = static_cast<int>(gl.nodes.size());
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
        const std::vector<double> panels = graded_cuts(cuts[p], cuts[p + 1]);
        for (std::size_t m = 0; m + 1 < panels.size(); ++m) {
            const double mid = 0.5 * (panels[m] + panels[m + 1]);
            const double half = 0.5 * (panels[m + 1] - panels[m]);
            if (half <= 0.0) continue;
            for (int k = 0; k < q; ++k) {
                const double u = mid + half * gl.nodes[k];
                const double phi = bump(u);
                const double base = gl.weights[k] * half;
                mass += base * phi;
                double wt = base;
                switch (order) {
                    case 0: wt *= phi; break;
                    case 1: wt *= bump_prime(u); break;
                    default: wt *= bump_second(u); break;
                }
                if (wt != 0.0 || phi != 0.0) {
                    rule.u.push_back(u);
                    raw.push_back(wt);
                }
            }
        }
    }
    if (!(mass > 0.0)) throw std::logic_error("kernel_rule: empty kernel mass");
    rule.w.resize(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) rule.w[k] = raw[k] * scale / mass;
    return rule;
}

/// Cubic Hermite table of a smooth function and its derivative on a uniform
/// grid; values interpolate with O(h^4) error, derivatives via their own
/// Hermite data.
struct HermiteTable {
    double x0 = 0.0, h = 1.0;
    std::vector<double> f, df;  // node values and node derivatives

    bool covers(double x) const {
        return !f.empty() && x >= x0 && x <= x0 + h * static_cast<double>(f.size() - 1);
    }

    double eval(double x) const {
        const double q = (x - x0) / h;
        std::size_t i = static_cast<std::size_t>(q);
        if (i + 1 >= f.size()) i = f.size() - 2;
        const double u = q - static_cast<double>(i);
        const double u2 = u * u, u3 = u2 * u;
        const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
        const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
        return h00 * f[i] + h10 * h * df[i] + h01 * f[i + 1] + h11 * h * df[i + 1];
    }

    /// Shape preservation for nondecreasing data: sort out 1e-13 quadrature
    /// wiggles in the node values, then limit slopes into the monotone
    /// region. The interpolant is then nondecreasing cell by cell and never
    /// leaves the node range.
    void limit_monotone() {
        for (std::size_t i = 1; i < f.size(); ++i) f[i] = std::max(f[i], f[i - 1]);
        for (std::size_t i = 0; i < f.size(); ++i) {
            double cap = std::numeric_limits<double>::infinity();
            if (i > 0) cap = std::min(cap, 3.0 * (f[i] - f[i - 1]) / h);
            if (i + 1 < f.size()) cap = std::min(cap, 3.0 * (f[i + 1] - f[i]) / h);
            df[i] = std::clamp(df[i], 0.0, cap);
        }
    }

    /// Shape preservation for nonnegative data: clamp node values at zero
    /// and limit slopes so the cubic cannot dip below zero inside a cell.
    void limit_nonnegative() {
        for (double& v : f) v = std::max(v, 0.0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            double lo = -std::numeric_limits<double>::infinity();
            double hi = std::numeric_limits<double>::infinity();
            lo = std::max(lo, -3.0 * f[i] / h);
            hi = std::min(hi, 3.0 * f[i] / h);
            df[i] = std::clamp(df[i], lo, hi);
        }
    }
};

/// Piecewise lookup over a list of Hermite tables; the first covering table
/// wins, so finer tables go in front.
struct TableStack {
    std::vector<HermiteTable> tabs;

    bool empty() const { return tabs.empty(); }

    const HermiteTable* find(double x) const {
        for (const auto& t : tabs)
            if (t.covers(x)) return &t;
        return nullptr;
    }
};

}  // namespace detail

/// Smooth approximation b_n = b * phi_n of a MonotonePair, with phi_n a
/// normalized product bump kernel of width 1/n. Values and gradients are
/// componentwise convolutions evaluated by composite fixed-order
/// Gauss-Legendre quadrature per axis, split at the registered kinks so both
/// stay smooth functions of x. The discrete kernel weights are nonnegative
/// and sum to one, so monotonicity, sup-norm domination and the fixing of
/// affine functions carry over from the exact convolution.
///
/// Componentwise drifts (those carrying scalar profiles) are smoothed through
/// dense Hermite tables of the 1-D profile built once per level; custom
/// vector drifts fall back to the full tensor quadrature.
class SmoothedDrift {
  public:
    SmoothedDrift(MonotonePair source, int level, int quad_order = 16)
        : source_(std::move(source)), level_(level), gl_(quad_order) {
        if (level_ < 1) throw std::invalid_argument("SmoothedDrift: level must be >= 1");
        if (quad_order < 2) throw std::invalid_argument("SmoothedDrift: quadrature order too small");
        base_value_ = detail::kernel_rule(gl_, {}, 0, 1.0);
        base_deriv_ = detail::kernel_rule(gl_, {}, 1, static_cast<double>(level_));
        if (source_.componentwise()) build_tables();
    }

    const MonotonePair& source() const { return source_; }
    int level() const { return level_; }
    double kernel_width() const { return 1.0 / level_; }
    int dim() const { return source_.dim; }
    bool tabulated() const { return !hat_tabs_.empty(); }

    void hat(double s, double t, std::span<const double> x, std::span<double> out) const {
        half_value(true, s, t, x, out);
    }
    void check(double s, double t, std::span<const double> x, std::span<double> out) const {
        half_value(false, s, t, x, out);
    }
    void value(double s, double t, std::span<const double> x, std::span<double> out) const {
        const int d = dim();
        std::vector<double> tmp(d);
        hat(s, t, x, out);
        check(s, t, x, tmp);
        for (int j = 0; j < d; ++j) out[j] -= tmp[j];
    }

    /// Gradient of one half; entry (i, j) = d b_j / d x_i, row-major d x d.
    /// All entries are >= 0 up to quadrature noise.
    void grad_hat(double s, double t, std::span<const double> x, std::span<double> out_dd) const {
        half_grad(true, s, t, x, out_dd);
    }
    void grad_check(double s, double t, std::span<const double> x, std::span<double> out_dd) const {
        half_grad(false, s, t, x, out_dd);
    }

    void grad(double s, double t, std::span<const double> x, std::span<double> out_dd) const {
        const int d = dim();
        std::vector<double> tmp(static_cast<std::size_t>(d) * d);
        grad_hat(s, t, x, out_dd);
        grad_check(s, t, x, tmp);
        for (std::size_t k = 0; k < tmp.size(); ++k) out_dd[k] -= tmp[k];
    }

    /// Entrywise grad hat + grad check, the quantity driving the pathwise
    /// exponential bound on the derivative field.
    void grad_sum(double s, double t, std::span<const double> x, std::span<double> out_dd) const {
        const int d = dim();
        std::vector<double> tmp(static_cast<std::size_t>(d) * d);
        grad_hat(s, t, x, out_dd);
        grad_check(s, t, x, tmp);
        for (std::size_t k = 0; k < tmp.size(); ++k) out_dd[k] += tmp[k];
    }

    /// Smoothed scalar profile (componentwise drifts only).
    double profile(bool hat_half, double x) const {
        require_tables();
        if (const auto* t = (hat_half ? hat_tabs_ : check_tabs_).find(x)) return t->eval(x);
        return profile_quadrature(hat_half, 0, x);
    }

    /// Derivative of the smoothed scalar profile.
    double profile_deriv(bool hat_half, double x) const {
        require_tables();
        if (const auto* t = (hat_half ? hat_dtabs_ : check_dtabs_).find(x)) return t->eval(x);
        return profile_quadrature(hat_half, 1, x);
    }

  private:
    void require_tables() const {
        if (!source_.componentwise())
            throw std::logic_error("SmoothedDrift: drift has no scalar profile");
    }

    /// Direct quadrature of the 1-D profile convolution (order 0, 1 or 2).
    double profile_quadrature(bool hat_half, int order, double x) const {
        const ScalarFn& f = hat_half ? source_.hat_profile : source_.check_profile;
        if (!f) return 0.0;
        const double h = kernel_width();
        std::vector<double> splits;
        for (double kink : source_.kinks) {
            const double u = (x - kink) * level_;
            if (u > -1.0 && u < 1.0) splits.push_back(u);
        }
        const double scale = order == 0 ? 1.0 : (order == 1 ? level_ : static_cast<double>(level_) * level_);
        const detail::KernelRule rule =
            (splits.empty() && order <= 1)
                ? (order == 0 ? base_value_ : base_deriv_)
                : detail::kernel_rule(gl_, splits, order, scale);
        double acc = 0.0;
        for (std::size_t k = 0; k < rule.u.size(); ++k) acc += rule.w[k] * f(x - h * rule.u[k]);
        return acc;
    }

    void build_tables() {
        // Segments: a fine band around each kink (this is where the smoothed
        // profile bends on the scale of the kernel width) plus a coarse
        // global band. Fine tables shadow the coarse one in lookups.
        struct Seg { double lo, hi, step; };
        std::vector<Seg> segs;
        const double w = kernel_width();
        for (double kink : source_.kinks)
            segs.push_back({kink - w - 0.05, kink + w + 0.05, w / 256.0});
        segs.push_back({-6.0, 6.0, 0.02});

        auto build = [&](bool hat_half, detail::TableStack& vs, detail::TableStack& ds) {
            for (const Seg& s : segs) {
                const int count = static_cast<int>(std::ceil((s.hi - s.lo) / s.step)) + 1;
                detail::HermiteTable tab, dtab;
                tab.x0 = dtab.x0 = s.lo;
                tab.h = dtab.h = s.step;
                tab.f.resize(count);
                tab.df.resize(count);
                dtab.f.resize(count);
                dtab.df.resize(count);
                for (int k = 0; k < count; ++k) {
                    const double x = s.lo + k * s.step;
                    tab.f[k] = profile_quadrature(hat_half, 0, x);
                    const double d1 = profile_quadrature(hat_half, 1, x);
                    tab.df[k] = d1;
                    dtab.f[k] = d1;
                    dtab.df[k] = profile_quadrature(hat_half, 2, x);
                }
                tab.limit_monotone();
                dtab.limit_nonnegative();
                vs.tabs.push_back(std::move(tab));
                ds.tabs.push_back(std::move(dtab));
            }
        };
        build(true, hat_tabs_, hat_dtabs_);
        if (source_.check_profile) build(false, check_tabs_, check_dtabs_);
        else {
            // check half is identically zero
            detail::HermiteTable z;
            z.x0 = -6.0;
            z.h = 12.0;
            z.f.assign(2, 0.0);
            z.df.assign(2, 0.0);
            check_tabs_.tabs.push_back(z);
            check_dtabs_.tabs.push_back(z);
        }
    }

    void half_value(bool hat_half, double s, double t, std::span<const double> x,
                    std::span<double> out) const {
        const int d = dim();
        if (source_.componentwise()) {
            for (int j = 0; j < d; ++j) out[j] = profile(hat_half, x[j]);
            return;
        }
        tensor_convolve(hat_half ? source_.b_hat : source_.b_check, s, t, x, -1, out);
    }

    void half_grad(bool hat_half, double s, double t, std::span<const double> x,
                   std::span<double> out_dd) const {
        const int d = dim();
        std::fill(out_dd.begin(), out_dd.end(), 0.0);
        if (source_.componentwise()) {
            for (int j = 0; j < d; ++j)
                out_dd[static_cast<std::size_t>(j) * d + j] = profile_deriv(hat_half, x[j]);
            return;
        }
        const DriftFn& fn = hat_half ? source_.b_hat : source_.b_check;
        std::vector<double> row(d);
        for (int i = 0; i < d; ++i) {
            tensor_convolve(fn, s, t, x, i, row);
            for (int j = 0; j < d; ++j) out_dd[static_cast<std::size_t>(i) * d + j] = row[j];
        }
    }

    /// Full tensor quadrature for drifts without a scalar profile.
    void tensor_convolve(const DriftFn& fn, double s, double t, std::span<const double> x,
                         int deriv_axis, std::span<double> out) const {
        const int d = dim();
        const double h = kernel_width();
        std::vector<detail::KernelRule> rules(d);
        for (int i = 0; i < d; ++i) {
            std::vector<double> splits;
            for (double kink : source_.kinks) {
                const double u = (x[i] - kink) * level_;
                if (u > -1.0 && u < 1.0) splits.push_back(u);
            }
            const int order = (i == deriv_axis) ? 1 : 0;
            const double scale = order == 1 ? static_cast<double>(level_) : 1.0;
            rules[i] = splits.empty() ? (order == 0 ? base_value_ : base_deriv_)
                                      : detail::kernel_rule(gl_, splits, order, scale);
        }
        std::vector<double> y(d), val(d);
        std::fill(out.begin(), out.end(), 0.0);
        tensor_recurse(fn, s, t, x, rules, 0, 1.0, h, y, val, out);
    }

    void tensor_recurse(const DriftFn& fn, double s, double t, std::span<const double> x,
                        const std::vector<detail::KernelRule>& rules, int axis, double coeff,
                        double h, std::vector<double>& y, std::vector<double>& val,
                        std::span<double> out) const {
        const int d = dim();
        if (axis == d) {
            fn(s, t, y, val);
            for (int j = 0; j < d; ++j) out[j] += coeff * val[j];
            return;
        }
        const detail::KernelRule& r = rules[axis];
        for (std::size_t k = 0; k < r.u.size(); ++k) {
            if (r.w[k] == 0.0) continue;
            y[axis] = x[axis] - h * r.u[k];
            tensor_recurse(fn, s, t, x, rules, axis + 1, coeff * r.w[k], h, y, val, out);
        }
    }

    MonotonePair source_;
    int level_;
    detail::GaussLegendre gl_;
    detail::KernelRule base_value_, base_deriv_;
    detail::TableStack hat_tabs_, hat_dtabs_, check_tabs_, check_dtabs_;
};

// ---------------------------------------------------------------------------
// Built-in drift catalog
// ---------------------------------------------------------------------------

namespace drifts {

inline MonotonePair zero(int d) {
    MonotonePair p;
    p.id = "zero";
    p.dim = d;
    p.hat_profile = [](double) { return 0.0; };
    p.check_profile = nullptr;
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = p.b_hat;
    p.growth = Growth::bounded(0.0);
    return p;
}

inline MonotonePair constant(int d, double c) {
    MonotonePair p;
    p.id = "constant";
    p.dim = d;
    p.hat_profile = [c](double) { return c; };
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = componentwise_fn([](double) { return 0.0; });
    p.growth = Growth::bounded(std::fabs(c));
    return p;
}

/// b(x) = lambda x + c componentwise; the half holding the linear term
/// depends on the sign of lambda.
inline MonotonePair affine(int d, double lambda, double c) {
    MonotonePair p;
    p.id = "affine";
    p.dim = d;
    if (lambda >= 0.0) {
        p.hat_profile = [lambda, c](double x) { return lambda * x + c; };
        p.check_profile = nullptr;
    } else {
        p.hat_profile = [c](double) { return c; };
        p.check_profile = [lambda](double x) { return -lambda * x; };
    }
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = p.check_profile ? componentwise_fn(p.check_profile)
                                : componentwise_fn([](double) { return 0.0; });
    p.growth = Growth::linear(std::max(std::fabs(lambda), std::fabs(c)));
    return p;
}

/// Componentwise sign with the tie-break sign(0) = 0.
inline MonotonePair sign(int d) {
    MonotonePair p;
    p.id = "sign";
    p.dim = d;
    p.hat_profile = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = componentwise_fn([](double) { return 0.0; });
    p.growth = Growth::bounded(1.0);
    p.kinks = {0.0};
    return p;
}

/// Componentwise unit step 1[x >= threshold].
inline MonotonePair step(int d, double threshold) {
    MonotonePair p;
    p.id = "step";
    p.dim = d;
    p.hat_profile = [threshold](double x) { return x >= threshold ? 1.0 : 0.0; };
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = componentwise_fn([](double) { return 0.0; });
    p.growth = Growth::bounded(1.0);
    p.kinks = {threshold};
    return p;
}

/// b(x) = x - x^3 with hat = x, check = x^3. The declared linear-growth
/// constant is deliberately too small for the cubic tail; this entry is the
/// negative test for the growth validator.
inline MonotonePair cubic(int d) {
    MonotonePair p;
    p.id = "cubic";
    p.dim = d;
    p.hat_profile = [](double x) { return x; };
    p.check_profile = [](double x) { return x * x * x; };
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = componentwise_fn(p.check_profile);
    p.growth = Growth::linear(1.0);
    return p;
}

/// b(x) = M tanh(x) componentwise; already nondecreasing, so check = 0.
inline MonotonePair tanh_drift(int d, double m) {
    MonotonePair p;
    p.id = "tanh";
    p.dim = d;
    p.hat_profile = [m](double x) { return m * std::tanh(x); };
    p.b_hat = componentwise_fn(p.hat_profile);
    p.b_check = componentwise_fn([](double) { return 0.0; });
    p.growth = Growth::bounded(std::fabs(m));
    return p;
}

}  // namespace drifts

/// Registry mapping drift ids (plus a parameter map) to MonotonePair
/// instances. Built-ins are pre-registered; custom drifts can be added
/// programmatically.
class DriftCatalog {
  public:
    using Factory = std::function<MonotonePair(int d, const std::map<std::string, double>&)>;

    DriftCatalog() {
        auto param = [](const std::map<std::string, double>& p, const std::string& k, double dflt) {
            auto it = p.find(k);
            return it == p.end() ? dflt : it->second;
        };
        add("zero", [](int d, const std::map<std::string, double>&) { return drifts::zero(d); });
        add("constant", [param](int d, const std::map<std::string, double>& p) {
            return drifts::constant(d, param(p, "c", 1.0));
        });
        add("affine", [param](int d, const std::map<std::string, double>& p) {
            return drifts::affine(d, param(p, "lambda", 1.0), param(p, "c", 0.0));
        });
        add("sign", [](int d, const std::map<std::string, double>&) { return drifts::sign(d); });
        add("step", [param](int d, const std::map<std::string, double>& p) {
            return drifts::step(d, param(p, "threshold", 0.0));
        });
        add("cubic", [](int d, const std::map<std::string, double>&) { return drifts::cubic(d); });
        add("tanh", [param](int d, const std::map<std::string, double>& p) {
            return drifts::tanh_drift(d, param(p, "M", 1.0));
        });
    }

    void add(const std::string& id, Factory f) { factories_[id] = std::move(f); }

    bool contains(const std::string& id) const { return factories_.count(id) > 0; }

    MonotonePair make(const std::string& id, int d,
                      const std::map<std::string, double>& params = {}) const {
        auto it = factories_.find(id);
        if (it == factories_.end()) throw std::invalid_argument("unknown drift id: " + id);
        MonotonePair p = it->second(d, params);
        p.id = id;
        return p;
    }

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : factories_) out.push_back(k);
        return out;
    }

  private:
    std::map<std::string, Factory> factories_;
};

}  // namespace sheetfield
