#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sheetfield/estimates.hpp"

using namespace sheetfield;

namespace {

GridSpec square_grid(int n, int d = 1) {
    GridSpec g;
    g.n_s = g.n_t = n;
    g.s_max = g.t_max = 1.0;
    g.d = d;
    return g;
}

}  // namespace

TEST_CASE("rho is exactly antisymmetric and linear for affine drifts", "[rho]") {
    const SheetPath w = generate_sheet(square_grid(64), 21);
    const MonotonePair sgn = drifts::sign(1);
    const MonotonePair aff = drifts::affine(1, 1.0, 0.0);
    const DyadicCell cell{3, 2, 5};
    const std::vector<double> x{0.37}, y{-0.12};

    REQUIRE(rho(cell, x, x, w, sgn)[0] == 0.0);
    const double fwd = rho(cell, x, y, w, sgn)[0];
    const double bwd = rho(cell, y, x, w, sgn)[0];
    REQUIRE(fwd == -bwd);

    // affine: the integrand is the constant x - y, so rho = 4^-n (x - y)
    const double lin = rho(cell, x, y, w, aff)[0];
    REQUIRE(lin == Catch::Approx((x[0] - y[0]) / 64.0).margin(1e-14));
}

TEST_CASE("rho matches a refined-grid oracle for the sign drift", "[rho][mc]") {
    const MonotonePair sgn = drifts::sign(1);
    const DyadicCell cell{3, 2, 5};
    const std::vector<double> x{0.1}, y{-0.1};
    const double area = 1.0 / 64.0;
    for (int k = 0; k < 50; ++k) {
        const SheetPath fine = generate_sheet(square_grid(512), 777000 + k);
        const SheetPath coarse = restrict_lattice(fine, 8);
        const double rf = rho(cell, x, y, fine, sgn)[0];
        const double rc = rho(cell, x, y, coarse, sgn)[0];
        REQUIRE(std::fabs(rf - rc) <= 0.5 * area);
    }
}

TEST_CASE("rho in higher dimension acts componentwise for componentwise drifts", "[rho]") {
    const SheetPath w = generate_sheet(square_grid(32, 2), 22);
    const MonotonePair aff = drifts::affine(2, 1.0, 0.0);
    const DyadicCell cell{2, 1, 3};
    const std::vector<double> x{0.3, -0.2}, y{-0.1, 0.4};
    const auto r = rho(cell, x, y, w, aff);
    REQUIRE(r[0] == Catch::Approx((x[0] - y[0]) / 16.0).margin(1e-14));
    REQUIRE(r[1] == Catch::Approx((x[1] - y[1]) / 16.0).margin(1e-14));

    const std::vector<double> bad{1.5, 0.0};
    REQUIRE_THROWS_AS(rho(cell, bad, y, w, aff), std::invalid_argument);
}

TEST_CASE("monotone bracketing of rho", "[rho]") {
    // for a nondecreasing drift, widening the offsets can only widen rho
    const MonotonePair sgn = drifts::sign(1);
    const DyadicCell cell{2, 1, 2};
    for (int k = 0; k < 20; ++k) {
        const SheetPath w = generate_sheet(square_grid(64), 5000 + k);
        const std::vector<double> x{0.07}, y{-0.05};
        const std::vector<double> xp{0.07 + 0.125}, ym{-0.05 - 0.125};
        REQUIRE(rho(cell, x, y, w, sgn)[0] <= rho(cell, xp, ym, w, sgn)[0] + 1e-15);
    }
}

TEST_CASE("pseudo-metric fit bounds deterministic drifts", "[fit]") {
    AveragingParams p;
    p.kind = AveragingBound::PseudoMetric;
    p.levels = {1, 2, 3, 4};
    p.xs = {{0.3}, {0.05}};
    p.ys = {{-0.2}, {-0.05}};
    p.fit_paths = 4;
    p.check_paths = 4;
    p.seed0 = 100;
    p.grid_n = 64;

    // b(x) = x/2: rho = 4^-n (x-y)/2 exactly, so every ratio is
    // 2^-n / (2 [sqrt(n) + sqrt(log+ 1/|x-y|)]) <= 1.
    const auto half = averaging_fit_and_check(drifts::affine(1, 0.5, 0.0), p);
    REQUIRE(half.fit.fitted <= 1.0);
    REQUIRE(half.fit.fitted > 0.0);
    REQUIRE(half.check_violations == 0);

    const auto zero = averaging_fit_and_check(drifts::zero(1), p);
    REQUIRE(zero.fit.fitted == 0.0);
}

TEST_CASE("origin fit bounds the affine drift deterministically", "[fit]") {
    AveragingParams p;
    p.kind = AveragingBound::Origin;
    p.levels = {1, 2, 3};
    p.xs = {{0.4}, {0.02}};
    p.fit_paths = 3;
    p.check_paths = 3;
    p.seed0 = 300;
    p.grid_n = 64;
    const auto rep = averaging_fit_and_check(drifts::affine(1, 1.0, 0.0), p);
    // ratio = 4^-n |x| / (sqrt(n) 2^-n (|x| + 2^{-4^n})) <= 2^-n / sqrt(n) <= 1
    REQUIRE(rep.fit.fitted <= 1.0);
    REQUIRE(rep.check_violations == 0);
}

TEST_CASE("averaging constants for the sign drift are level-stable", "[fit][mc]") {
    AveragingParams p;
    p.kind = AveragingBound::Origin;
    p.levels = {3, 4, 5, 6};
    p.xs = {{0.5}, {0.1}, {0.02}};
    p.fit_paths = 60;
    p.check_paths = 60;
    p.seed0 = 4000;
    p.grid_n = 64;
    const auto rep = averaging_fit_and_check(drifts::sign(1), p);
    REQUIRE(rep.fit.fitted > 0.0);
    // stability across levels: max within 2x the median of the level maxima
    std::vector<double> lm = rep.fit.level_maxima;
    std::sort(lm.begin(), lm.end());
    const double median = lm[lm.size() / 2];
    REQUIRE(lm.back() <= 2.0 * median);
    // out-of-sample: safety factor 2 leaves no violations
    REQUIRE(rep.check_violations == 0);

    p.kind = AveragingBound::PseudoMetric;
    p.ys = {{-0.5}, {-0.1}, {-0.02}};
    const auto c1 = averaging_fit_and_check(drifts::sign(1), p);
    REQUIRE(c1.fit.fitted > 0.0);
    REQUIRE(c1.check_violations == 0);
}

TEST_CASE("tail experiment degenerate and deterministic cases", "[tail]") {
    TailParams p;
    p.paths = 400;
    p.seed0 = 47;
    p.grid_n = 32;
    p.etas = {0.25, 0.5, 1.0};

    const auto zero = tail_experiment(drifts::zero(1), p);
    for (const auto& row : zero.rows) REQUIRE(row.hits == 0);
    REQUIRE(zero.truncated);

    // affine drift: rho = area (x - y) exactly; exceedance is a step with
    // crossover at eta = sqrt(area)
    TailParams q;
    q.rect = {0.0, 0.5, 0.0, 0.5};
    q.paths = 200;
    q.seed0 = 48;
    q.grid_n = 32;
    q.x = {0.25};
    q.y = {-0.25};
    q.etas = {0.4, 0.49, 0.51, 1.0};
    const auto aff = tail_experiment(drifts::affine(1, 1.0, 0.0), q);
    REQUIRE(aff.rows[0].p_hat == 1.0);
    REQUIRE(aff.rows[1].p_hat == 1.0);
    REQUIRE(aff.rows[2].p_hat == 0.0);
    REQUIRE(aff.rows[3].p_hat == 0.0);
}

TEST_CASE("sign drift tail is Gaussian-like", "[tail][mc]") {
    TailParams p;
    p.paths = 20000;
    p.seed0 = 600000;
    p.grid_n = 32;
    p.x = {0.1};
    p.y = {-0.1};
    p.etas = {0.25, 0.5, 0.75, 1.0, 1.25};
    const auto rep = tail_experiment(drifts::sign(1), p);
    REQUIRE(rep.used.size() >= 3);
    REQUIRE(rep.alpha_hat > 0.0);
    REQUIRE(rep.r_squared >= 0.9);
}

TEST_CASE("exponential moment degenerate cases are exactly one", "[expmoment]") {
    ExpMomentParams p;
    p.paths = 50;
    p.seed0 = 71;
    p.grid_n = 16;

    // gradient-free drift
    const SmoothedDrift flat(drifts::constant(1, 0.5), 4);
    for (const auto& row : exp_moment_experiment(flat, p)) {
        REQUIRE(row.mean == 1.0);
        REQUIRE(row.stderr_of_mean == 0.0);
    }

    // eps = 0 kills the exponent
    ExpMomentParams q = p;
    q.eps = 0.0;
    const SmoothedDrift sgn8(drifts::sign(1), 8);
    for (const auto& row : exp_moment_experiment(sgn8, q)) REQUIRE(row.mean == 1.0);
}

TEST_CASE("exponential moment for the smoothed sign drift is stable", "[expmoment][mc]") {
    ExpMomentParams p;
    p.paths = 600;
    p.seed0 = 72000;
    p.grid_n = 32;
    p.alphas = {0.05, 0.1, 0.2};
    const SmoothedDrift sgn8(drifts::sign(1), 8);
    for (const auto& row : exp_moment_experiment(sgn8, p)) {
        REQUIRE(row.overflow_count == 0);
        REQUIRE(std::isfinite(row.mean));
        const double se = std::sqrt(row.stderr_of_mean * row.stderr_of_mean +
                                    row.stderr_half * row.stderr_half);
        REQUIRE(std::fabs(row.mean - row.mean_half) <= 3.0 * se);
    }
}

TEST_CASE("gronwall beta band and clamp", "[gronwall]") {
    // inside the admissible band for small n, clamped for large n
    REQUIRE(gronwall_beta(2) == std::exp2(-std::pow(4.0, 17.0 * 2 / 24.0)));
    REQUIRE(gronwall_beta(6) == std::ldexp(1.0, -60));
    const double lo = -std::pow(4.0, 3.0 * 2 / 4.0), hi = -std::pow(4.0, 2.0 * 2 / 3.0);
    const double b2 = std::log2(gronwall_beta(2));
    REQUIRE(b2 >= lo);
    REQUIRE(b2 <= hi);
}

TEST_CASE("gronwall recursion trivial drifts", "[gronwall]") {
    const SheetPath w = generate_sheet(square_grid(64), 91);
    const double beta = gronwall_beta(4);

    // zero drift: u is the boundary extension; with cosine boundary its
    // modulus reaches 3 beta, still far inside every cell bound
    const auto rep = gronwall_recursion(drifts::zero(1), w, 4, beta, 0.5);
    REQUIRE(rep.sup_u <= 3.0 * beta * (1.0 + 1e-12));
    REQUIRE(rep.bound_holds);
    REQUIRE(rep.terminal_holds);
    REQUIRE(rep.max_ratio < 1.0);

    // constant drift: differenced drift vanishes identically
    const auto repc = gronwall_recursion(drifts::constant(1, 2.0), w, 4, beta, 0.5);
    REQUIRE(repc.sup_u <= 3.0 * beta * (1.0 + 1e-12));
    REQUIRE(repc.bound_holds);
}

TEST_CASE("gronwall regime violation names the minimal level", "[gronwall]") {
    const SheetPath w = generate_sheet(square_grid(64), 92);
    try {
        (void)gronwall_recursion(drifts::sign(1), w, 4, gronwall_beta(4), 50.0);
        FAIL("expected RegimeError");
    } catch (const RegimeError& e) {
        REQUIRE(e.minimal_n > 4);
        REQUIRE(50.0 * std::sqrt(static_cast<double>(e.minimal_n)) *
                    std::ldexp(1.0, -e.minimal_n) <=
                1.0 / 9.0);
    }
}

TEST_CASE("gronwall recursion holds for the sign drift", "[gronwall][mc]") {
    const double beta = gronwall_beta(6);
    for (int k = 0; k < 10; ++k) {
        const SheetPath w = generate_sheet(square_grid(256), 93000 + k);
        const auto rep = gronwall_recursion(drifts::sign(1), w, 6, beta, 2.0);
        REQUIRE(rep.bound_holds);
        REQUIRE(rep.terminal_holds);
        REQUIRE(rep.max_ratio < 1.0);
    }
}

TEST_CASE("uniqueness experiment trivial drifts", "[uniqueness]") {
    UniquenessParams p;
    p.seeds = 3;
    p.seed0 = 11;
    p.grids = {32, 64};
    p.starts = 5;

    const auto rep0 = uniqueness_experiment(drifts::zero(1), p);
    for (const auto& row : rep0.rows)
        for (double v : row.max_diff) REQUIRE(v <= 1e-12);

    const auto repc = uniqueness_experiment(drifts::constant(1, 1.5), p);
    for (const auto& row : repc.rows)
        for (double v : row.max_diff) REQUIRE(v <= 1e-12);
}

TEST_CASE("uniqueness trend for the sign drift", "[uniqueness][mc]") {
    UniquenessParams p;
    p.seeds = 6;
    p.seed0 = 31;
    p.grids = {64, 128, 256};
    p.starts = 5;
    const auto rep = uniqueness_experiment(drifts::sign(1), p);
    REQUIRE(rep.decreasing_count >= 5);
    REQUIRE(rep.final_worst <= 0.03);
    for (const auto& row : rep.rows) REQUIRE(row.failures == 0);
}
