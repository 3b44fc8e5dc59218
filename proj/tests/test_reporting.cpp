#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sheetfield/experiments.hpp"
#include "sheetfield/persist.hpp"

using namespace sheetfield;

namespace {

ExperimentConfig small_girsanov_config() {
    return ExperimentConfig::parse(
        "[experiment]\n"
        "kind = girsanov\n"
        "seed0 = 5000\n"
        "[grid]\n"
        "n = 8\n"
        "[params]\n"
        "replications = 2000\n"
        "small_paths = 500\n");
}

}  // namespace

TEST_CASE("config parsing, canonical form and hashing", "[config]") {
    const std::string text =
        "# comment\n"
        "[experiment]\n"
        "kind = tail   \n"
        "seed0 = 42\n"
        "\n"
        "[params]\n"
        "x = 0.125  # trailing comment\n";
    const auto cfg = ExperimentConfig::parse(text);
    REQUIRE(cfg.get("experiment", "kind") == "tail");
    REQUIRE(cfg.get_u64("experiment", "seed0", 0) == 42);
    REQUIRE(cfg.get_num("params", "x") == 0.125);
    REQUIRE(cfg.get("params", "missing", "dflt") == "dflt");
    REQUIRE_THROWS_AS(cfg.get("params", "missing"), ConfigError);
    REQUIRE_THROWS_AS(cfg.get_num("experiment", "kind"), ConfigError);

    // formatting noise does not move the hash
    const auto cfg2 = ExperimentConfig::parse("[params]\nx=0.125\n[experiment]\nseed0=42\nkind=tail");
    REQUIRE(cfg.hash_hex() == cfg2.hash_hex());

    REQUIRE_THROWS_AS(ExperimentConfig::parse("key_outside_section = 1\n"), ConfigError);
    REQUIRE_THROWS_AS(ExperimentConfig::parse("[experiment\nkind = x\n"), ConfigError);
    REQUIRE_THROWS_AS(ExperimentConfig::parse("[s]\nno_equals_here\n"), ConfigError);

    // the canonical form parses back to the same config
    const auto roundtrip = ExperimentConfig::parse(cfg.canonical());
    REQUIRE(roundtrip.hash_hex() == cfg.hash_hex());
}

TEST_CASE("report json round trip preserves tables bit-exactly", "[report]") {
    ExperimentReport rep;
    rep.kind = "demo";
    rep.config_hash = "00ff";
    rep.config_text = "experiment.kind = demo\n";
    rep.seed0 = 3;
    rep.seed_count = 7;
    rep.anchors = {"anchor text"};
    Table t;
    t.columns = {"a", "b"};
    t.add_row({0.1, 1.0 / 3.0});
    t.add_row({-1e-300, 12345.678901234567});
    rep.tables["t"] = t;
    rep.assertions.push_back({"check", true, "detail"});

    const std::string path = "report_roundtrip.json";
    save_report(rep, path);
    const ExperimentReport back = load_report(path);
    REQUIRE(compare_tables(rep, back).empty());
    REQUIRE(back.kind == "demo");
    REQUIRE(back.passed());
    std::remove(path.c_str());

    // a single edited cell is detected and named
    ExperimentReport edited = back;
    edited.tables["t"].rows[1][0] = -1.000000001e-300;
    const auto mism = compare_tables(rep, edited);
    REQUIRE(mism.size() == 1);
    REQUIRE(mism.front().find("t[1][0]") != std::string::npos);
}

TEST_CASE("csv output is rfc-4180 with 17 significant digits", "[report]") {
    Table t;
    t.columns = {"x", "y"};
    t.add_row({1.0 / 3.0, 2.0});
    const std::string path = "table.csv";
    write_csv(path, t);
    std::ifstream f(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    REQUIRE(content == "x,y\r\n0.33333333333333331,2\r\n");
    std::remove(path.c_str());

    REQUIRE(std::stod(format_f64(1.0 / 3.0)) == 1.0 / 3.0);  // 17 digits round-trip
}

TEST_CASE("experiments are bit-identical across worker counts", "[report][determinism]") {
    ExperimentRegistry registry;
    ExperimentContext ctx;
    ctx.config = small_girsanov_config();

    ctx.workers = 1;
    const ExperimentReport one = registry.run(ctx);
    ctx.workers = 4;
    const ExperimentReport four = registry.run(ctx);
    ctx.workers = 16;
    const ExperimentReport sixteen = registry.run(ctx);

    REQUIRE(compare_tables(one, four).empty());
    REQUIRE(compare_tables(one, sixteen).empty());
    REQUIRE(one.config_hash == four.config_hash);
}

TEST_CASE("seed offset moves the ensemble", "[report]") {
    ExperimentRegistry registry;
    ExperimentContext ctx;
    ctx.config = small_girsanov_config();
    ctx.workers = 2;
    const ExperimentReport base = registry.run(ctx);
    ctx.seed_offset = 1;
    const ExperimentReport shifted = registry.run(ctx);
    REQUIRE_FALSE(compare_tables(base, shifted).empty());
}

TEST_CASE("unknown kinds and bad configs are config errors", "[report]") {
    ExperimentRegistry registry;
    ExperimentContext ctx;
    ctx.config = ExperimentConfig::parse("[experiment]\nkind = nonsense\n");
    REQUIRE_THROWS_AS(registry.run(ctx), ConfigError);

    ctx.config = ExperimentConfig::parse(
        "[experiment]\nkind = tail\n[drift]\nid = not_a_drift\n[params]\nreplications = 10\n");
    REQUIRE_THROWS_AS(registry.run(ctx), ConfigError);
}

TEST_CASE("write_outputs emits report, csv tables and the results ledger", "[report]") {
    ExperimentRegistry registry;
    ExperimentContext ctx;
    ctx.config = small_girsanov_config();
    ctx.workers = 2;
    const ExperimentReport rep = registry.run(ctx);
    const std::string dir = "report_out_test";
    const std::string path = write_outputs(rep, dir);
    REQUIRE(std::filesystem::exists(path));
    REQUIRE(std::filesystem::exists(dir + "/results.csv"));
    const ExperimentReport loaded = load_report(path);
    REQUIRE(compare_tables(rep, loaded).empty());
    std::filesystem::remove_all(dir);
}

TEST_CASE("solution and derivative fields persist with sidecars", "[persist]") {
    GridSpec g;
    g.n_s = g.n_t = 12;
    g.d = 2;
    const SheetPath w = generate_sheet(g, 77);
    const SmoothedDrift sd(drifts::sign(2), 4);
    const SolutionField x = solve_goursat_euler(drift_field(sd), w, BoundaryData::constant(2, 0.5));

    io::save_solution(x, "field_test.sfb");
    const SolutionField back = io::load_solution("field_test.sfb");
    REQUIRE(back.grid.same_lattice(g));
    REQUIRE(back.scheme == Scheme::GoursatEuler);
    REQUIRE(back.drift_id == x.drift_id);
    for (std::size_t k = 0; k < x.values.size(); ++k) REQUIRE(back.values[k] == x.values[k]);

    const MalliavinField df = malliavin_derivative(sd, x, 0.25, 0.25);
    io::save_malliavin(df, "mall_test.sfb", w.seed());
    const MalliavinField dback = io::load_malliavin("mall_test.sfb");
    REQUIRE(dback.base_i == df.base_i);
    REQUIRE(dback.grid.d == 2);
    for (std::size_t k = 0; k < df.values.size(); ++k) REQUIRE(dback.values[k] == df.values[k]);

    std::remove("field_test.sfb");
    std::remove("field_test.sfb.json");
    std::remove("mall_test.sfb");
    std::remove("mall_test.sfb.json");
}
