#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sheetfield/malliavin.hpp"

using namespace sheetfield;

namespace {

GridSpec square_grid(int n, int d = 1) {
    GridSpec g;
    g.n_s = g.n_t = n;
    g.s_max = g.t_max = 1.0;
    g.d = d;
    return g;
}

// Series solution of the linear derivative equation for b = lambda x:
// D_{r,u}X_{s,t} = sum_m lambda^m ((s-r)(t-u))^m / (m!)^2.
double volterra_series(double lambda, double area) {
    double term = 1.0, acc = 1.0;
    for (int m = 1; m <= 40; ++m) {
        term *= lambda * area / (static_cast<double>(m) * m);
        acc += term;
    }
    return acc;
}

}  // namespace

TEST_CASE("derivative field is the identity for gradient-free drifts", "[malliavin]") {
    const GridSpec g = square_grid(16);
    const SheetPath w = generate_sheet(g, 61);
    const SmoothedDrift sd(drifts::constant(1, 0.7), 4);
    const SolutionField x = solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(1, 0.0));
    const MalliavinField df = malliavin_derivative(sd, x, 0.25, 0.5);
    for (int i = df.base_i; i <= g.n_s; ++i)
        for (int j = df.base_j; j <= g.n_t; ++j) REQUIRE(df(i, j, 0, 0) == 1.0);
    // below the base lines the response vanishes
    REQUIRE(df(0, 0, 0, 0) == 0.0);
}

TEST_CASE("derivative field matches the series oracle for lambda x", "[malliavin][oracle]") {
    for (int n : {128, 256}) {
        const GridSpec g = square_grid(n);
        const SheetPath w = generate_sheet(g, 62);
        const SmoothedDrift sd(drifts::affine(1, 1.0, 0.0), 4);
        const SolutionField x =
            solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(1, 0.0));
        const GradientField gf = gradient_field(sd, x);
        const MalliavinField df = malliavin_derivative(gf, 0, 0);
        const MalliavinField dq = malliavin_derivative(gf, n / 4, n / 2);
        REQUIRE(std::fabs(df(n, n, 0, 0) - volterra_series(1.0, 1.0)) <= 2.0 / n);
        REQUIRE(std::fabs(dq(n, n, 0, 0) - volterra_series(1.0, 0.75 * 0.5)) <= 2.0 / n);
    }
}

TEST_CASE("pathwise exponential bound holds node-wise", "[malliavin]") {
    const GridSpec g = square_grid(64);
    for (std::uint64_t seed : {63ull, 64ull, 65ull}) {
        const SheetPath w = generate_sheet(g, seed);
        const SmoothedDrift sd(drifts::sign(1), 8);
        const SolutionField x =
            solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(1, 0.0));
        const GradientField gf = gradient_field(sd, x);
        for (int bi : {0, 16}) {
            const MalliavinField df = malliavin_derivative(gf, bi, bi);
            REQUIRE(pathwise_bound_ratio(df, gf) <= 1.0 + 1e-9);
        }
    }
}

TEST_CASE("derivative field is >= 1 for a nondecreasing scalar drift", "[malliavin]") {
    const GridSpec g = square_grid(32);
    const SheetPath w = generate_sheet(g, 66);
    const SmoothedDrift sd(drifts::sign(1), 8);
    const SolutionField x = solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(1, 0.0));
    const GradientField gf = gradient_field(sd, x);
    const MalliavinField df = malliavin_derivative(gf, 4, 8);
    for (int i = 4; i <= g.n_s; ++i)
        for (int j = 8; j <= g.n_t; ++j) REQUIRE(df(i, j, 0, 0) >= 1.0 - 1e-12);
}

TEST_CASE("field scales exactly with the boundary matrix", "[malliavin]") {
    const GridSpec g = square_grid(32);
    const SheetPath w = generate_sheet(g, 67);
    const SmoothedDrift sd(drifts::tanh_drift(1, 1.0), 8);
    const SolutionField x = solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(1, 0.0));
    const GradientField gf = gradient_field(sd, x);
    const MalliavinField one = malliavin_derivative(gf, 8, 8, 1.0);
    const MalliavinField two = malliavin_derivative(gf, 8, 8, 2.0);
    for (std::size_t k = 0; k < one.values.size(); ++k)
        REQUIRE(two.values[k] == 2.0 * one.values[k]);
}

TEST_CASE("gradient field rejects dimension mismatches", "[malliavin]") {
    const GridSpec g = square_grid(8, 2);
    const SheetPath w = generate_sheet(g, 68);
    const SmoothedDrift sd1(drifts::sign(1), 4);
    const SmoothedDrift sd2(drifts::sign(2), 4);
    const SolutionField x = solve_goursat_euler(drift_field(sd2), w, BoundaryData::constant(2, 0.0));
    REQUIRE_THROWS_AS(gradient_field(sd1, x), std::invalid_argument);
    const GradientField gf = gradient_field(sd2, x);
    REQUIRE_THROWS_AS(malliavin_derivative(gf, 99, 0), std::invalid_argument);
}

TEST_CASE("finite difference check: zero drift responds linearly", "[malliavin][fd]") {
    const GridSpec g = square_grid(16);
    const SheetPath w = generate_sheet(g, 69);
    const SmoothedDrift sd(drifts::zero(1), 4);
    FdCheckParams p;
    p.delta = 1e-2;  // response is exactly linear; a larger bump keeps the
                     // quotient clear of cancellation noise
    const auto disc = finite_difference_check(sd, w, BoundaryData::constant(1, 0.0), 4, 4, p);
    REQUIRE(disc[0] <= 1e-12);
}

TEST_CASE("finite difference check: block average is the discrete derivative", "[malliavin][fd]") {
    // For a linear drift the block average of D reproduces the numeric
    // difference quotient to rounding; for a nonlinear drift the residual is
    // the O(delta) second-order term and shrinks with delta.
    const SheetPath fine = generate_sheet(square_grid(64), 70);
    const SmoothedDrift lin(drifts::affine(1, 1.0, 0.0), 4);
    FdCheckParams p;
    p.delta = 1e-4;
    const auto lin_disc = finite_difference_check(lin, fine, BoundaryData::constant(1, 0.0), 16, 16, p);
    REQUIRE(lin_disc[0] <= 1e-9);

    const SmoothedDrift nl(drifts::tanh_drift(1, 1.0), 8);
    const SheetPath w32 = restrict_lattice(fine, 2);
    double prev = 1e9;
    for (double delta : {1e-2, 1e-3, 1e-4}) {
        FdCheckParams q;
        q.delta = delta;
        const auto disc = finite_difference_check(nl, w32, BoundaryData::constant(1, 0.0), 8, 8, q);
        const double ds = w32.grid().ds();
        REQUIRE(disc[0] <= 0.5 * (ds + delta + q.width_cells * ds));
        REQUIRE(disc[0] <= prev / 5.0);  // one decade of delta buys >= 5x
        prev = disc[0];
    }
}

TEST_CASE("finite difference check: diagonal drifts stay diagonal", "[malliavin][fd]") {
    const GridSpec g = square_grid(16, 2);
    const SheetPath w = generate_sheet(g, 71);
    const SmoothedDrift sd(drifts::sign(2), 8);
    FdCheckParams p;
    p.delta = 1e-4;
    const auto disc = finite_difference_check(sd, w, BoundaryData::constant(2, 0.0), 4, 4, p);
    REQUIRE(disc[1] <= 1e-10);  // off-diagonal responses vanish
    REQUIRE(disc[2] <= 1e-10);
    REQUIRE(disc[0] <= 1e-3);
    REQUIRE(disc[3] <= 1e-3);
}

TEST_CASE("l2 bounds: zero drift baselines", "[malliavin][mc]") {
    L2BoundsParams p;
    p.levels = {2, 4};
    p.paths = 4000;
    p.seed0 = 720000;
    p.grid_n = 32;
    p.base_stride = 16;
    const auto rep = l2_bounds_experiment(drifts::zero(1), p);
    for (const auto& row : rep.rows) {
        REQUIRE(std::fabs(row.ex2_mean - 1.0) <= 3.0 * row.ex2_se);  // E W_{1,1}^2 = 1
        REQUIRE(row.ed2_mean == 1.0);                                 // D == identity
        REQUIRE(row.ed2_se == 0.0);
    }
}

TEST_CASE("l2 bounds for the smoothed sign drift", "[malliavin][mc]") {
    // The solution second moments are level-stable. The derivative second
    // moments are finite at every level but still climbing toward their
    // (very large) uniform ceiling over the accessible level range, so
    // level-flatness is not assertable here; what is assertable is that at
    // fixed level the estimate decreases under grid refinement, i.e. the
    // growth is partly a resolution artifact and the limit stays tame.
    L2BoundsParams p;
    p.levels = {4, 8, 16};
    p.paths = 4000;
    p.seed0 = 730000;
    p.grid_n = 32;
    p.base_stride = 8;
    const auto rep = l2_bounds_experiment(drifts::sign(1), p);
    REQUIRE(rep.slope_x - 2.0 * rep.slope_x_se <= 0.0);  // E|X|^2 has no level trend
    for (const auto& row : rep.rows) {
        REQUIRE(std::isfinite(row.ed2_mean));
        REQUIRE(row.ed2_mean < 1e3);
    }

    L2BoundsParams q;
    q.levels = {8};
    q.paths = 2000;
    q.seed0 = 730000;
    q.base_stride = 0;  // adjusted per grid below
    double prev = std::numeric_limits<double>::infinity();
    for (int grid : {32, 64, 128}) {
        q.grid_n = grid;
        q.base_stride = grid;
        const auto r = l2_bounds_experiment(drifts::sign(1), q);
        REQUIRE(r.rows[0].ed2_mean <= prev + 3.0 * r.rows[0].ed2_se);
        prev = r.rows[0].ed2_mean;
    }
}

TEST_CASE("small-time gate rejects targets beyond tau", "[malliavin]") {
    L2BoundsParams p;
    p.regime = MalliavinRegime::SmallTime;
    p.tau = 0.125;
    p.s = p.t = 0.5;
    try {
        (void)l2_bounds_experiment(drifts::affine(1, 1.0, 0.0), p);
        FAIL("expected a horizon error");
    } catch (const std::invalid_argument& e) {
        REQUIRE(std::string(e.what()).find("0.125") != std::string::npos);
    }
}

TEST_CASE("hoelder experiment degenerate and oracle cases", "[malliavin][mc]") {
    HolderParams p;
    p.level = 4;
    p.paths = 60;
    p.seed0 = 740000;
    p.grid_n = 64;
    p.offsets = {2, 8, 32};
    const auto zero = holder_experiment(drifts::zero(1), p);
    for (const auto& pr : zero.pairs) REQUIRE(pr.ed2_mean == 0.0);

    // lambda x: D is deterministic, E||dD||^2 = (B(A1) - B(A2))^2 and the
    // log-log slope is ~2
    const auto lin = holder_experiment(drifts::affine(1, 1.0, 0.0), p);
    REQUIRE(lin.slope >= 1.0);
    for (const auto& pr : lin.pairs) {
        const double a1 = (1.0 - pr.r_i / 64.0) * (1.0 - pr.u_i / 64.0);
        const double a2 = (1.0 - pr.r2_i / 64.0) * (1.0 - pr.u2_i / 64.0);
        const double oracle = std::pow(volterra_series(1.0, a1) - volterra_series(1.0, a2), 2);
        REQUIRE(pr.ed2_mean == Catch::Approx(oracle).margin(0.15 * oracle + 1e-4));
    }
}

TEST_CASE("hoelder slope for the smoothed sign drift is at least one", "[malliavin][mc]") {
    HolderParams p;
    p.level = 8;
    p.paths = 150;
    p.seed0 = 750000;
    p.grid_n = 64;
    p.offsets = {1, 2, 4, 8, 16};
    const auto rep = holder_experiment(drifts::sign(1), p);
    REQUIRE(rep.slope + 2.0 * rep.slope_se >= 1.0);
}

TEST_CASE("sobolev functional: zero drift, bounds and oracle", "[malliavin][mc]") {
    SobolevParams p;
    p.level = 4;
    p.paths = 40;
    p.seed0 = 760000;
    p.grid_n = 32;
    p.lattice = 4;

    REQUIRE(sobolev_functional(drifts::zero(1), p) == 0.0);

    SobolevParams bad = p;
    bad.beta = 1.5;
    REQUIRE_THROWS_AS(sobolev_functional(drifts::zero(1), bad), std::invalid_argument);

    // semi-analytic oracle for lambda x: deterministic D from the series,
    // same 4-D midpoint sum
    const double got = sobolev_functional(drifts::affine(1, 1.0, 0.0), p);
    double oracle = 0.0;
    const int m = p.lattice;
    for (int a1 = 0; a1 < m; ++a1)
        for (int c1 = 0; c1 < m; ++c1)
            for (int a2 = 0; a2 < m; ++a2)
                for (int c2 = 0; c2 < m; ++c2) {
                    if (a1 == a2 && c1 == c2) continue;
                    const double r1 = (2.0 * a1 + 1) / (2 * m), u1 = (2.0 * c1 + 1) / (2 * m);
                    const double r2 = (2.0 * a2 + 1) / (2 * m), u2 = (2.0 * c2 + 1) / (2 * m);
                    const double d1 = volterra_series(1.0, (1 - r1) * (1 - u1));
                    const double d2 = volterra_series(1.0, (1 - r2) * (1 - u2));
                    const double dist = std::fabs(r1 - r2) + std::fabs(u1 - u2);
                    oracle += (1.0 / (m * m)) * (1.0 / (m * m)) * (d1 - d2) * (d1 - d2) /
                              std::pow(dist, 2.0 + 2.0 * p.beta);
                }
    REQUIRE(got == Catch::Approx(oracle).epsilon(0.05));
}

TEST_CASE("sobolev functional diverges beyond beta = 1/2 under refinement", "[malliavin][mc]") {
    SobolevParams p;
    p.level = 8;
    p.paths = 30;
    p.seed0 = 770000;
    p.grid_n = 64;

    p.lattice = 4;
    p.beta = 0.25;
    const double lo_coarse = sobolev_functional(drifts::sign(1), p);
    p.beta = 0.45;
    const double mid_coarse = sobolev_functional(drifts::sign(1), p);
    p.beta = 0.75;
    const double hi_coarse = sobolev_functional(drifts::sign(1), p);

    REQUIRE(std::isfinite(lo_coarse));
    REQUIRE(lo_coarse < mid_coarse);  // monotone in beta

    p.lattice = 8;
    p.beta = 0.25;
    const double lo_fine = sobolev_functional(drifts::sign(1), p);
    p.beta = 0.75;
    const double hi_fine = sobolev_functional(drifts::sign(1), p);

    // converging below 1/2, blowing up above
    REQUIRE(lo_fine <= 1.6 * lo_coarse);
    REQUIRE(hi_fine >= 1.2 * hi_coarse);
}

TEST_CASE("strong convergence of smoothed solutions", "[malliavin][mc]") {
    StrongConvergenceParams p;
    p.levels = {2, 4, 8, 16, 32};
    p.paths = 150;
    p.seed0 = 780000;
    p.grid_n = 64;

    const auto zero = strong_convergence_diag(drifts::zero(1), p);
    for (const auto& row : zero) REQUIRE(row.mean == 0.0);

    const auto sgn = strong_convergence_diag(drifts::sign(1), p);
    for (std::size_t k = 1; k < sgn.size(); ++k) REQUIRE(sgn[k].mean < sgn[k - 1].mean);

    // an already-smooth drift only sees the mollification bias ~ Lip / n
    const auto smooth = strong_convergence_diag(drifts::tanh_drift(1, 1.0), p);
    for (const auto& row : smooth) REQUIRE(row.mean <= std::pow(1.0 / row.level, 2));
}

TEST_CASE("small-time regime selection", "[malliavin][mc]") {
    SmallTimeParams p;
    p.paths = 1500;
    p.seed0 = 790000;
    p.grid_n = 16;

    // zero drift: every horizon is stable with E = 1, tau capped at 1
    const auto zero = small_time_regime(drifts::zero(1), p);
    REQUIRE(zero.tau1 == 1.0);
    REQUIRE(zero.tau == 1.0);
    for (const auto& row : zero.rows) REQUIRE(row.mean == 1.0);

    // bounded drift: zeta is infinite, tau = tau1 capped at 1
    const auto bounded = small_time_regime(drifts::tanh_drift(1, 1.0), p);
    REQUIRE(std::isinf(bounded.zeta));
    REQUIRE(bounded.tau == bounded.tau1);

    // linear growth M = 1, c1 = 2: zeta = 1/256 and tau <= 1/8192
    SmallTimeParams q = p;
    q.horizons = {1.0, 0.25, 1.0 / 16, 1.0 / 128, 1.0 / 8192};
    const auto lin = small_time_regime(drifts::affine(1, 1.0, 0.0), q);
    REQUIRE(lin.zeta == Catch::Approx(1.0 / 256).epsilon(1e-12));
    REQUIRE(lin.tau <= 1.0 / 8192 + 1e-15);
}
