#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sheetfield {

/// Pairwise (cascade) summation. Result depends only on the order of the
/// input slots, never on how the work was scheduled, which is what makes
/// replay bit-identical across worker counts.
inline double pairwise_sum(std::span<const double> v) {
    const std::size_t n = v.size();
    if (n <= 8) {
        double acc = 0.0;
        for (double x : v) acc += x;
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& v) {
    return pairwise_sum(std::span<const double>(v));
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_of_mean = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error of a sample, both via pairwise sums.
inline MeanStderr mc_stats(std::span<const double> samples) {
    MeanStderr r;
    r.n = samples.size();
    if (r.n == 0) return r;
    r.mean = pairwise_sum(samples) / static_cast<double>(r.n);
    if (r.n < 2) return r;
    std::vector<double> sq(r.n);
    for (std::size_t i = 0; i < r.n; ++i) {
        const double c = samples[i] - r.mean;
        sq[i] = c * c;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(r.n - 1);
    r.stderr_of_mean = std::sqrt(var / static_cast<double>(r.n));
    return r;
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;   // from residual variance
    double r_squared = 0.0;
};

/// Weighted least squares of y on x. Weights >= 0; pass all-ones for OLS.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y,
                        std::span<const double> w) {
    const std::size_t n = x.size();
    if (n != y.size() || n != w.size() || n < 2)
        throw std::invalid_argument("fit_line: need >=2 equally sized samples");
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sw += w[i]; sx += w[i] * x[i]; sy += w[i] * y[i]; }
    if (sw <= 0) throw std::invalid_argument("fit_line: zero total weight");
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    if (sxx <= 0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += w[i] * r * r;
    }
    f.r_squared = (syy > 0) ? 1.0 - ss_res / syy : 1.0;
    if (n > 2) f.slope_se = std::sqrt((ss_res / static_cast<double>(n - 2)) / sxx);
    return f;
}

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    std::vector<double> w(x.size(), 1.0);
    return fit_line(x, y, w);
}

/// Slope of y on x when each y_i carries a known standard error; the slope
/// variance comes from propagating those errors, so it stays meaningful even
/// for two points (where a residual-based estimate has no degrees of
/// freedom).
inline LineFit fit_trend(std::span<const double> x, std::span<const double> y,
                         std::span<const double> y_se) {
    const std::size_t n = x.size();
    if (n != y.size() || n != y_se.size() || n < 2)
        throw std::invalid_argument("fit_trend: need >=2 equally sized samples");
    double se_floor = 1e-15;
    for (std::size_t i = 0; i < n; ++i) se_floor = std::max(se_floor, 1e-9 * std::fabs(y[i]));
    double sw = 0, sx = 0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = std::max(y_se[i], se_floor);
        w[i] = 1.0 / (s * s);
        sw += w[i];
        sx += w[i] * x[i];
    }
    const double mx = sx / sw;
    double sxx = 0, sxy = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * y[i];
        sy += w[i] * y[i];
    }
    if (sxx <= 0) throw std::invalid_argument("fit_trend: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = sy / sw - f.slope * mx;
    f.slope_se = std::sqrt(1.0 / sxx);
    return f;
}

/// Runs fn(i) for i in [0, n). Each index owns its output slot, so the
/// chunking below is a scheduling detail with no effect on results.
template <typename Fn>
void parallel_for_index(std::size_t n, int workers, Fn&& fn) {
    if (workers < 1) workers = 1;
    const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(workers), n ? n : 1);
    if (w <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(w);
    const std::size_t chunk = (n + w - 1) / w;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn, &first_error, &err_mutex] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace sheetfield
