#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sheetfield/drift.hpp"

using namespace sheetfield;

namespace {

// Composite-Simpson oracle for the bump mass on [-1, 1]; fixes the kernel
// normalization independently of the quadrature used in the library.
double simpson_bump_mass() {
    const int m = 200000;  // even
    const double h = 2.0 / m;
    double acc = detail::bump(-1.0) + detail::bump(1.0);
    for (int k = 1; k < m; ++k) acc += detail::bump(-1.0 + k * h) * (k % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

double eval1(const SmoothedDrift& sd, double x) {
    double out = 0.0;
    sd.value(0.0, 0.0, std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
}

double hat1(const SmoothedDrift& sd, double x) {
    double out = 0.0;
    sd.hat(0.0, 0.0, std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
}

double grad_hat1(const SmoothedDrift& sd, double x) {
    double out = 0.0;
    sd.grad_hat(0.0, 0.0, std::span<const double>(&x, 1), std::span<double>(&out, 1));
    return out;
}

}  // namespace

TEST_CASE("validate accepts sign and rejects a decreasing drift", "[drift]") {
    const auto ok = validate(drifts::sign(2), 5000, 11);
    REQUIRE(ok.passed());

    MonotonePair bad = drifts::sign(1);
    bad.id = "neg_affine";
    bad.b_hat = [](double, double, std::span<const double> x, std::span<double> out) {
        out[0] = -x[0];
    };
    bad.growth = Growth::linear(1.0);
    const auto rep = validate(bad, 5000, 12);
    REQUIRE_FALSE(rep.passed());
    REQUIRE(rep.violations.front().kind == ValidationIssue::Kind::HatMonotonicity);
    // the witness really is an ordered pair violating monotonicity
    const auto& v = rep.violations.front();
    REQUIRE(v.x[0] <= v.y[0]);
    REQUIRE(v.lhs > v.rhs);
}

TEST_CASE("validate flags the cubic growth bound with a witness", "[drift]") {
    const auto rep = validate(drifts::cubic(1), 20000, 13);
    REQUIRE_FALSE(rep.passed());
    bool found_growth = false;
    for (const auto& v : rep.violations) {
        if (v.kind == ValidationIssue::Kind::GrowthBound) {
            found_growth = true;
            const double x = v.x[0];
            REQUIRE(std::fabs(x - x * x * x) > 1.0 * (1.0 + std::fabs(x)));
        }
        REQUIRE(v.kind != ValidationIssue::Kind::HatMonotonicity);
        REQUIRE(v.kind != ValidationIssue::Kind::CheckMonotonicity);
    }
    REQUIRE(found_growth);
}

TEST_CASE("mollifier fixes affine drifts", "[drift][mollify]") {
    const SmoothedDrift sd(drifts::affine(1, 2.0, 0.5), 4);
    for (double x : {-1.3, -0.2, 0.0, 0.7, 2.1})
        REQUIRE(eval1(sd, x) == Catch::Approx(2.0 * x + 0.5).margin(1e-9));

    // gradient parts of hat-affine: (lambda, 0)
    double gh = 0.0, gc = 0.0;
    const double x = 0.4;
    sd.grad_hat(0, 0, std::span<const double>(&x, 1), std::span<double>(&gh, 1));
    sd.grad_check(0, 0, std::span<const double>(&x, 1), std::span<double>(&gc, 1));
    REQUIRE(gh == Catch::Approx(2.0).margin(1e-9));
    REQUIRE(gc == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("mollified sign is odd and matches the closed form slope", "[drift][mollify]") {
    const double mass = simpson_bump_mass();
    for (int n : {4, 8, 16}) {
        const SmoothedDrift sd(drifts::sign(1), n);
        REQUIRE(hat1(sd, 0.0) == Catch::Approx(0.0).margin(1e-12));
        // max slope of the smoothed sign sits at 0 and equals 2 n phi(0) / mass
        const double oracle = 2.0 * n * std::exp(-1.0) / mass;
        double max_slope = 0.0;
        for (int k = -40; k <= 40; ++k)
            max_slope = std::max(max_slope, grad_hat1(sd, k * 0.05 / n));
        REQUIRE(max_slope == Catch::Approx(oracle).epsilon(1e-6));
        REQUIRE(grad_hat1(sd, 0.0) == Catch::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("gradient agrees with a central finite difference", "[drift][mollify]") {
    const SmoothedDrift sd(drifts::sign(1), 8);
    const double x = 0.5 / 8.0;
    const double h = 1e-5;
    const double fd = (hat1(sd, x + h) - hat1(sd, x - h)) / (2.0 * h);
    REQUIRE(grad_hat1(sd, x) == Catch::Approx(fd).margin(1e-6));
}

TEST_CASE("zero drift has zero gradient", "[drift][mollify]") {
    const SmoothedDrift sd(drifts::zero(2), 8);
    std::vector<double> x{0.3, -0.4}, g(4, 1.0);
    sd.grad(0, 0, x, g);
    for (double v : g) REQUIRE(v == 0.0);
}

TEST_CASE("smoothing preserves monotonicity, bounds and nonnegative gradients", "[drift][mollify]") {
    const SmoothedDrift sd(drifts::sign(2), 8);
    const std::uint64_t key = rng::make_key(99, rng::Domain::Generic);
    std::vector<double> x(2), y(2), bx(2), by(2), g(4);
    for (int k = 0; k < 500; ++k) {
        for (int i = 0; i < 2; ++i) {
            x[i] = rng::uniform(key, k, 2 * i, -1.5, 1.5);
            y[i] = x[i] + rng::uniform(key, k, 2 * i + 1, 0.0, 1.0);
        }
        sd.hat(0, 0, x, bx);
        sd.hat(0, 0, y, by);
        for (int j = 0; j < 2; ++j) {
            REQUIRE(bx[j] <= by[j] + 1e-12);
            REQUIRE(std::fabs(bx[j]) <= 1.0 + 1e-12);  // sup-norm domination
        }
        sd.grad_hat(0, 0, x, g);
        for (double v : g) REQUIRE(v >= -1e-12);
    }
}

TEST_CASE("pointwise convergence at continuity points is monotone", "[drift][mollify]") {
    const MonotonePair sign1 = drifts::sign(1);
    for (double x : {0.1, -0.35, 0.8}) {
        double prev_err = 2.0;
        for (int n : {2, 4, 8, 16, 32}) {
            const SmoothedDrift sd(sign1, n);
            const double target = x > 0 ? 1.0 : -1.0;
            const double err = std::fabs(hat1(sd, x) - target);
            REQUIRE(err <= prev_err + 1e-12);
            prev_err = err;
        }
        REQUIRE(prev_err <= 1e-12);  // converged once width < |x|
    }
}

TEST_CASE("catalog lookup and parameters", "[drift]") {
    DriftCatalog cat;
    REQUIRE(cat.contains("sign"));
    REQUIRE_FALSE(cat.contains("nonsense"));
    REQUIRE_THROWS_AS(cat.make("nonsense", 1), std::invalid_argument);

    const MonotonePair t = cat.make("tanh", 1, {{"M", 2.5}});
    std::vector<double> x{100.0}, out(1);
    t.b_hat(0, 0, x, out);
    REQUIRE(out[0] == Catch::Approx(2.5).margin(1e-9));
    REQUIRE(t.growth.kind == Growth::Kind::Bounded);

    // custom registration
    cat.add("my_step", [](int d, const std::map<std::string, double>& p) {
        return drifts::step(d, p.count("k") ? p.at("k") : 0.25);
    });
    const MonotonePair st = cat.make("my_step", 1, {{"k", 0.5}});
    x[0] = 0.4;
    st.b_hat(0, 0, x, out);
    REQUIRE(out[0] == 0.0);
}

TEST_CASE("tie break at the sign discontinuity is zero", "[drift]") {
    const MonotonePair s = drifts::sign(1);
    std::vector<double> x{0.0}, out(1);
    s.b_hat(0, 0, x, out);
    REQUIRE(out[0] == 0.0);
}

TEST_CASE("tabulated profile path agrees with direct tensor quadrature", "[drift][mollify]") {
    const MonotonePair with_profile = drifts::sign(1);
    MonotonePair raw = with_profile;  // same evaluators, no profile shortcut
    raw.hat_profile = nullptr;
    raw.check_profile = nullptr;

    const SmoothedDrift fast(with_profile, 8);
    const SmoothedDrift slow(raw, 8);
    REQUIRE(fast.tabulated());
    REQUIRE_FALSE(slow.tabulated());

    for (double x : {-0.5, -0.11, -0.03, 0.0, 0.004, 0.02, 0.09, 0.2, 1.4}) {
        double vf = 0, vs = 0, gf = 0, gs = 0;
        fast.hat(0, 0, std::span<const double>(&x, 1), std::span<double>(&vf, 1));
        slow.hat(0, 0, std::span<const double>(&x, 1), std::span<double>(&vs, 1));
        fast.grad_hat(0, 0, std::span<const double>(&x, 1), std::span<double>(&gf, 1));
        slow.grad_hat(0, 0, std::span<const double>(&x, 1), std::span<double>(&gs, 1));
        REQUIRE(vf == Catch::Approx(vs).margin(1e-10));
        REQUIRE(gf == Catch::Approx(gs).margin(1e-8));
    }
}
