#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "sheetfield/experiments.hpp"
#include "sheetfield/io.hpp"

namespace sf = sheetfield;

namespace {

int default_workers() {
    if (const char* env = std::getenv("SHEETFIELD_WORKERS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw sf::ConfigError("cannot open config file: " + path);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

int run_command(const std::string& config_path, std::string out_dir, bool out_flag_given,
                int workers, std::uint64_t seed_offset) {
    sf::ExperimentContext ctx;
    ctx.config = sf::ExperimentConfig::parse(read_text_file(config_path));
    ctx.workers = workers;
    ctx.seed_offset = seed_offset;
    if (!out_flag_given) out_dir = ctx.config.get("experiment", "out", out_dir);

    sf::ExperimentRegistry registry;
    const sf::ExperimentReport rep = registry.run(ctx);
    const std::string path = sf::write_outputs(rep, out_dir);
    std::cout << "report: " << path << "\n";
    int failures = 0;
    for (const auto& a : rep.assertions) {
        std::cout << (a.pass ? "  [pass] " : "  [FAIL] ") << a.name;
        if (!a.detail.empty()) std::cout << "  (" << a.detail << ")";
        std::cout << "\n";
        if (!a.pass) ++failures;
    }
    if (failures) {
        std::cout << failures << " assertion(s) failed\n";
        return 1;
    }
    return 0;
}

int describe_command(const std::string& kind) {
    sf::ExperimentRegistry registry;
    if (!registry.contains(kind)) {
        std::cerr << "unknown experiment kind: " << kind << "\n";
        return 2;
    }
    std::cout << kind << "\n  " << registry.get(kind).anchor << "\n";
    return 0;
}

int replay_command(const std::string& report_path, int workers) {
    const sf::ExperimentReport original = sf::load_report(report_path);
    sf::ExperimentContext ctx;
    ctx.config = sf::ExperimentConfig::parse(original.config_text);
    ctx.workers = workers;
    sf::ExperimentRegistry registry;
    const sf::ExperimentReport fresh = registry.run(ctx);
    if (fresh.config_hash != original.config_hash) {
        std::cout << "config hash mismatch: " << fresh.config_hash << " vs "
                  << original.config_hash << "\n";
        return 1;
    }
    const auto mismatches = sf::compare_tables(original, fresh);
    if (!mismatches.empty()) {
        for (const auto& m : mismatches) std::cout << "mismatch: " << m << "\n";
        return 1;
    }
    std::cout << "replay identical (" << original.tables.size() << " tables)\n";
    return 0;
}

int catalog_command() {
    sf::DriftCatalog catalog;
    for (const auto& id : catalog.ids()) std::cout << id << "\n";
    return 0;
}

int sheet_command(const std::string& out_path, int n, int d, std::uint64_t seed, double smax,
                  double tmax) {
    sf::GridSpec g;
    g.n_s = g.n_t = n;
    g.d = d;
    g.s_max = smax;
    g.t_max = tmax;
    g.validate();
    sf::io::save_sheet(sf::generate_sheet(g, seed), out_path);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo laboratory for SDEs on the plane driven by a Brownian sheet"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "runs", kind, report_path, sheet_out = "sheet.sfb";
    int workers = default_workers();
    std::uint64_t seed_offset = 0;
    int sheet_n = 64, sheet_d = 1;
    std::uint64_t sheet_seed = 1;
    double sheet_smax = 1.0, sheet_tmax = 1.0;

    auto* run = app.add_subcommand("run", "run a configured experiment");
    run->add_option("--config", config_path, "experiment config file")->required();
    auto* out_opt = run->add_option("--out", out_dir, "output directory (or experiment.out)");
    run->add_option("--workers", workers, "worker threads (env SHEETFIELD_WORKERS)");
    run->add_option("--seed-offset", seed_offset, "offset added to the base seed");

    auto* describe = app.add_subcommand("describe", "show what an experiment kind verifies");
    describe->add_option("kind", kind, "experiment kind")->required();

    auto* replay = app.add_subcommand("replay", "re-run a report's config and bit-compare tables");
    replay->add_option("report", report_path, "report JSON file")->required();
    replay->add_option("--workers", workers, "worker threads");

    app.add_subcommand("catalog", "list built-in drifts");

    auto* sheet = app.add_subcommand("sheet", "generate and persist one sheet path");
    sheet->add_option("--out", sheet_out, "output file");
    sheet->add_option("--n", sheet_n, "cells per side");
    sheet->add_option("--d", sheet_d, "components");
    sheet->add_option("--seed", sheet_seed, "seed");
    sheet->add_option("--smax", sheet_smax, "s extent");
    sheet->add_option("--tmax", sheet_tmax, "t extent");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return run_command(config_path, out_dir, out_opt->count() > 0, workers, seed_offset);
        if (describe->parsed()) return describe_command(kind);
        if (replay->parsed()) return replay_command(report_path, workers);
        if (app.get_subcommand("catalog")->parsed()) return catalog_command();
        if (sheet->parsed())
            return sheet_command(sheet_out, sheet_n, sheet_d, sheet_seed, sheet_smax, sheet_tmax);
    } catch (const sf::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const sf::RegimeError& e) {
        std::cerr << "regime error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "parameter error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
