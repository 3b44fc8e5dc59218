#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sheetfield/config.hpp"

namespace sheetfield {

/// Serializes a binary64 with 17 significant digits, which round-trips the
/// value exactly. Every number in tables, CSVs and reports goes through
/// here so replays can compare text for bit-identity.
inline std::string format_f64(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Named columns of doubles; the payload of every experiment output.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_row(std::vector<double> row) {
        if (row.size() != columns.size())
            throw std::invalid_argument("Table: row width mismatch");
        rows.push_back(std::move(row));
    }
};

struct Assertion {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ExperimentReport {
    std::string kind;
    std::string config_hash;
    std::string config_text;  // canonical config, embedded for replay
    std::uint64_t seed0 = 0;
    std::uint64_t seed_count = 0;
    std::vector<std::string> anchors;
    std::map<std::string, Table> tables;
    std::vector<Assertion> assertions;
    double wallclock_sec = 0.0;
    std::string version = "1";

    bool passed() const {
        for (const auto& a : assertions)
            if (!a.pass) return false;
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["kind"] = kind;
        j["config_hash"] = config_hash;
        j["config"] = config_text;
        j["seed0"] = seed0;
        j["seed_count"] = seed_count;
        j["anchors"] = anchors;
        j["version"] = version;
        j["wallclock_sec"] = wallclock_sec;
        nlohmann::json jt = nlohmann::json::object();
        for (const auto& [name, table] : tables) {
            nlohmann::json cell = nlohmann::json::object();
            cell["columns"] = table.columns;
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& row : table.rows) {
                nlohmann::json r = nlohmann::json::array();
                for (double v : row) r.push_back(format_f64(v));
                rows.push_back(std::move(r));
            }
            cell["rows"] = std::move(rows);
            jt[name] = std::move(cell);
        }
        j["tables"] = std::move(jt);
        nlohmann::json ja = nlohmann::json::array();
        for (const auto& a : assertions)
            ja.push_back({{"name", a.name}, {"pass", a.pass}, {"detail", a.detail}});
        j["assertions"] = std::move(ja);
        return j;
    }

    static ExperimentReport from_json(const nlohmann::json& j) {
        ExperimentReport rep;
        rep.kind = j.at("kind").get<std::string>();
        rep.config_hash = j.at("config_hash").get<std::string>();
        rep.config_text = j.at("config").get<std::string>();
        rep.seed0 = j.at("seed0").get<std::uint64_t>();
        rep.seed_count = j.at("seed_count").get<std::uint64_t>();
        rep.anchors = j.at("anchors").get<std::vector<std::string>>();
        rep.version = j.at("version").get<std::string>();
        rep.wallclock_sec = j.at("wallclock_sec").get<double>();
        for (const auto& [name, cell] : j.at("tables").items()) {
            Table t;
            t.columns = cell.at("columns").get<std::vector<std::string>>();
            for (const auto& row : cell.at("rows")) {
                std::vector<double> r;
                for (const auto& v : row) r.push_back(std::stod(v.get<std::string>()));
                t.rows.push_back(std::move(r));
            }
            rep.tables[name] = std::move(t);
        }
        for (const auto& a : j.at("assertions"))
            rep.assertions.push_back({a.at("name").get<std::string>(), a.at("pass").get<bool>(),
                                      a.at("detail").get<std::string>()});
        return rep;
    }
};

/// RFC-4180 CSV with '.' decimal separator and 17 significant digits.
inline void write_csv(const std::string& path, const Table& table) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
        if (c) f << ",";
        f << table.columns[c];
    }
    f << "\r\n";
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) f << ",";
            f << format_f64(row[c]);
        }
        f << "\r\n";
    }
}

/// Appends one line per statistic to the shared results ledger:
/// experiment id, op, grid, N, mean, stderr, seed0.
inline void append_results_ledger(const std::string& path, const std::string& experiment_id,
                                  const std::string& op, int grid, std::uint64_t n, double mean,
                                  double stderr_of_mean, std::uint64_t seed0) {
    const bool fresh = !std::filesystem::exists(path);
    std::ofstream f(path, std::ios::binary | std::ios::app);
    if (!f) throw std::runtime_error("cannot open for append: " + path);
    if (fresh) f << "experiment,op,grid,N,mean,stderr,seed0\r\n";
    f << experiment_id << "," << op << "," << grid << "," << n << "," << format_f64(mean) << ","
      << format_f64(stderr_of_mean) << "," << seed0 << "\r\n";
}

inline void save_report(const ExperimentReport& rep, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f << rep.to_json().dump(2) << "\n";
}

inline ExperimentReport load_report(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    nlohmann::json j;
    f >> j;
    return ExperimentReport::from_json(j);
}

/// Cell-by-cell comparison of two reports' tables on the canonical 17-digit
/// serialization; returns the list of mismatches ("table[r][c]: a vs b").
inline std::vector<std::string> compare_tables(const ExperimentReport& a,
                                               const ExperimentReport& b) {
    std::vector<std::string> mismatches;
    for (const auto& [name, ta] : a.tables) {
        const auto it = b.tables.find(name);
        if (it == b.tables.end()) {
            mismatches.push_back("table " + name + " missing in replay");
            continue;
        }
        const Table& tb = it->second;
        if (ta.rows.size() != tb.rows.size()) {
            mismatches.push_back("table " + name + ": row count " + std::to_string(ta.rows.size()) +
                                 " vs " + std::to_string(tb.rows.size()));
            continue;
        }
        for (std::size_t r = 0; r < ta.rows.size(); ++r)
            for (std::size_t c = 0; c < ta.rows[r].size(); ++c) {
                const std::string va = format_f64(ta.rows[r][c]);
                const std::string vb = format_f64(tb.rows[r][c]);
                if (va != vb)
                    mismatches.push_back(name + "[" + std::to_string(r) + "][" + std::to_string(c) +
                                         "]: " + va + " vs " + vb);
            }
    }
    for (const auto& [name, tb] : b.tables)
        if (!a.tables.count(name)) mismatches.push_back("table " + name + " missing in original");
    return mismatches;
}

}  // namespace sheetfield
