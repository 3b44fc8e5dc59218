#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "sheetfield/io.hpp"
#include "sheetfield/sheet.hpp"
#include "sheetfield/stats.hpp"

using namespace sheetfield;

namespace {

GridSpec make_grid(int n, double smax, double tmax, int d) {
    GridSpec g;
    g.n_s = n;
    g.n_t = n;
    g.s_max = smax;
    g.t_max = tmax;
    g.d = d;
    return g;
}

}  // namespace

TEST_CASE("philox counter generator matches the reference vectors", "[rng]") {
    // Known-answer vectors for the 10-round 4x32 generator.
    auto block = [](std::uint64_t key, std::uint64_t hi, std::uint64_t lo) {
        return rng::Philox4x32::block(key, hi, lo);
    };
    const auto zero = block(0, 0, 0);
    REQUIRE(zero == std::array<std::uint32_t, 4>{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    const auto ones = block(~0ull, ~0ull, ~0ull);
    REQUIRE(ones == std::array<std::uint32_t, 4>{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    const auto pi = block(0x299f31d0a4093822ull, 0x0370734413198a2eull, 0x85a308d3243f6a88ull);
    REQUIRE(pi == std::array<std::uint32_t, 4>{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});

    // unit-interval mapping stays inside (0, 1]
    REQUIRE(rng::bits_to_unit(0) > 0.0);
    REQUIRE(rng::bits_to_unit(~0ull) == 1.0);
}

TEST_CASE("sheet vanishes on the axes and is reproducible", "[sheet]") {
    const GridSpec g = make_grid(8, 1.0, 1.0, 2);
    const SheetPath w1 = generate_sheet(g, 1234);
    const SheetPath w2 = generate_sheet(g, 1234);
    const SheetPath w3 = generate_sheet(g, 1235);

    for (int i = 0; i <= g.n_s; ++i)
        for (int c = 0; c < g.d; ++c) REQUIRE(w1(i, 0, c) == 0.0);
    for (int j = 0; j <= g.n_t; ++j)
        for (int c = 0; c < g.d; ++c) REQUIRE(w1(0, j, c) == 0.0);

    REQUIRE(std::equal(w1.values().begin(), w1.values().end(), w2.values().begin()));
    bool identical_to_other_seed = std::equal(w1.values().begin(), w1.values().end(), w3.values().begin());
    REQUIRE_FALSE(identical_to_other_seed);
}

TEST_CASE("corner variance matches s*t", "[sheet][mc]") {
    const GridSpec g = make_grid(2, 1.0, 1.0, 1);
    const std::size_t n = 20000;
    std::vector<double> sq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 100 + k);
        sq[k] = w(2, 2, 0) * w(2, 2, 0);
    }
    const auto st = mc_stats(sq);
    REQUIRE(std::fabs(st.mean - 1.0) <= 3.0 * st.stderr_of_mean);
}

TEST_CASE("rectangle increment variance equals area", "[sheet][mc]") {
    // Increment over [0.25, 0.5] x [0.5, 1.0]; area 0.125.
    const GridSpec g = make_grid(4, 1.0, 1.0, 1);
    const Rect r{0.25, 0.5, 0.5, 1.0};
    const std::size_t n = 100000;
    std::vector<double> sq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 77000 + k);
        const double inc = w.rect_increment(r)[0];
        sq[k] = inc * inc;
    }
    const auto st = mc_stats(sq);
    REQUIRE(std::fabs(st.mean - 0.125) <= 3.0 * st.stderr_of_mean);
}

TEST_CASE("rect_increment basics", "[sheet]") {
    const GridSpec g = make_grid(4, 1.0, 1.0, 2);
    const SheetPath w = generate_sheet(g, 5);

    const auto full = w.rect_increment({0.0, 1.0, 0.0, 1.0});
    for (int c = 0; c < g.d; ++c) REQUIRE(full[c] == w(4, 4, c));

    const auto degenerate = w.rect_increment({0.5, 0.5, 0.0, 1.0});
    for (int c = 0; c < g.d; ++c) REQUIRE(degenerate[c] == 0.0);

    REQUIRE_THROWS_AS(w.rect_increment({0.1, 0.5, 0.0, 1.0}), std::invalid_argument);
}

TEST_CASE("disjoint cell increments are uncorrelated", "[sheet][mc]") {
    const GridSpec g = make_grid(4, 1.0, 1.0, 1);
    const Rect ra{0.0, 0.25, 0.0, 0.25};
    const Rect rb{0.5, 0.75, 0.5, 0.75};
    const std::size_t n = 100000;
    std::vector<double> prod(n);
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 910000 + k);
        prod[k] = w.rect_increment(ra)[0] * w.rect_increment(rb)[0];
    }
    const auto st = mc_stats(prod);
    REQUIRE(std::fabs(st.mean) <= 3.0 * st.stderr_of_mean);
}

TEST_CASE("node covariance matches (s^s')(t^t') delta_ij", "[sheet][mc]") {
    const GridSpec g = make_grid(4, 1.0, 1.0, 2);
    struct Node { int i, j, c; };
    const std::vector<Node> nodes = {{1, 3, 0}, {2, 2, 0}, {4, 4, 0}, {2, 2, 1}, {3, 1, 1}};
    const std::size_t n = 100000;
    const std::size_t m = nodes.size();
    std::vector<std::vector<double>> prods(m * m, std::vector<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 3300000 + k);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = 0; b < m; ++b)
                prods[a * m + b][k] = w(nodes[a].i, nodes[a].j, nodes[a].c) *
                                      w(nodes[b].i, nodes[b].j, nodes[b].c);
    }
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
            const double target =
                (nodes[a].c == nodes[b].c)
                    ? std::min(g.s(nodes[a].i), g.s(nodes[b].i)) *
                          std::min(g.t(nodes[a].j), g.t(nodes[b].j))
                    : 0.0;
            const auto st = mc_stats(prods[a * m + b]);
            INFO("pair " << a << "," << b << " target " << target << " got " << st.mean);
            REQUIRE(std::fabs(st.mean - target) <= 3.0 * st.stderr_of_mean);
        }
    }
}

TEST_CASE("rescale identity and degenerate cases", "[sheet]") {
    const GridSpec g = make_grid(8, 1.0, 1.0, 1);
    const SheetPath w = generate_sheet(g, 99);

    const SheetPath id = rescale(w, 0.0, 0.0, 1.0, 1.0);
    REQUIRE(id.grid().n_s == g.n_s);
    for (std::size_t k = 0; k < w.values().size(); ++k)
        REQUIRE(id.values()[k] == w.values()[k]);

    const SheetPath flat = rescale(w, 0.0, 0.0, 0.5, 0.0);
    for (double v : flat.values()) REQUIRE(v == 0.0);

    REQUIRE_THROWS_AS(rescale(w, 0.01, 0.0, 0.5, 0.5), std::invalid_argument);
}

TEST_CASE("rescaled window has variance eps*eps' at the corner", "[sheet][mc]") {
    const GridSpec g = make_grid(8, 1.0, 1.0, 1);
    const std::size_t n = 50000;
    std::vector<double> sq(n);
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 1700000 + k);
        const SheetPath tilde = rescale(w, 0.0, 0.0, 0.5, 0.5);
        const double corner = tilde(tilde.grid().n_s, tilde.grid().n_t, 0);
        sq[k] = corner * corner;
    }
    const auto st = mc_stats(sq);
    REQUIRE(std::fabs(st.mean - 0.25) <= 3.0 * st.stderr_of_mean);
}

TEST_CASE("dalang_walsh reversal vanishes on its axes", "[sheet]") {
    const GridSpec g = make_grid(8, 1.0, 1.0, 1);
    const SheetPath w = generate_sheet(g, 4242);
    const SheetPath b = dalang_walsh(w, 0);
    REQUIRE(b.grid().n_t == g.n_t - 1);
    for (int i = 0; i <= b.grid().n_s; ++i) REQUIRE(b(i, 0, 0) == 0.0);
    for (int j = 0; j <= b.grid().n_t; ++j) REQUIRE(b(0, j, 0) == 0.0);

    GridSpec short_grid = make_grid(8, 1.0, 0.5, 1);
    REQUIRE_THROWS_AS(dalang_walsh(generate_sheet(short_grid, 1), 0), std::invalid_argument);
}

TEST_CASE("dalang_walsh reversal is again a sheet", "[sheet][mc]") {
    // Variance at (1, 1/2) should be 1/2, and covariance between two nodes
    // should follow the product formula on the restricted domain.
    const GridSpec g = make_grid(8, 1.0, 1.0, 1);
    const std::size_t n = 50000;
    std::vector<double> sq(n), cross(n);
    for (std::size_t k = 0; k < n; ++k) {
        const SheetPath w = generate_sheet(g, 2500000 + k);
        const SheetPath b = dalang_walsh(w, 0);
        const double b_half = b(8, 4, 0);    // (s, t) = (1, 1/2)
        const double b_other = b(4, 2, 0);   // (s, t) = (1/2, 1/4)
        sq[k] = b_half * b_half;
        cross[k] = b_half * b_other;
    }
    const auto v = mc_stats(sq);
    REQUIRE(std::fabs(v.mean - 0.5) <= 3.0 * v.stderr_of_mean);
    const auto c = mc_stats(cross);
    REQUIRE(std::fabs(c.mean - 0.125) <= 3.0 * c.stderr_of_mean);
}

TEST_CASE("binary field file round-trips", "[sheet][io]") {
    const GridSpec g = make_grid(5, 1.0, 0.75, 3);
    const SheetPath w = generate_sheet(g, 31337);
    const std::string path = "sheet_roundtrip.sfb";
    io::save_sheet(w, path);
    const SheetPath back = io::load_sheet(path);
    REQUIRE(back.grid().same_lattice(g));
    REQUIRE(back.seed() == w.seed());
    for (std::size_t k = 0; k < w.values().size(); ++k)
        REQUIRE(back.values()[k] == w.values()[k]);
    std::remove(path.c_str());

    // corrupt magic
    std::string bytes = io::read_file("/dev/null");
    REQUIRE_THROWS_AS(io::decode_field(std::string("notafield")), std::runtime_error);
}

TEST_CASE("bilinear evaluation agrees with nodes and interpolates between", "[sheet]") {
    const GridSpec g = make_grid(4, 1.0, 1.0, 1);
    const SheetPath w = generate_sheet(g, 8);
    REQUIRE(w.eval(0.5, 0.75, 0) == Catch::Approx(w(2, 3, 0)).margin(1e-15));
    const double mid = w.eval(0.125, 0.125, 0);
    const double avg = 0.25 * (w(0, 0, 0) + w(1, 0, 0) + w(0, 1, 0) + w(1, 1, 0));
    REQUIRE(mid == Catch::Approx(avg).margin(1e-15));
}
