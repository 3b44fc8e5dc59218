#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "sheetfield/io.hpp"
#include "sheetfield/malliavin.hpp"
#include "sheetfield/solver.hpp"

namespace sheetfield::io {

// Solution and derivative fields reuse the sheet container; everything that
// is not node data goes into a JSON sidecar next to the binary file.

inline void save_solution(const SolutionField& field, const std::string& path) {
    write_file(path, encode_field(field.grid, field.sheet_seed, field.values));
    nlohmann::json side;
    side["scheme"] = scheme_name(field.scheme);
    side["iterations"] = field.iterations;
    side["residual"] = field.residual;
    side["drift_id"] = field.drift_id;
    side["sheet_seed"] = field.sheet_seed;
    std::ofstream f(path + ".json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path + ".json");
    f << side.dump(2) << "\n";
}

inline SolutionField load_solution(const std::string& path) {
    FieldBlob blob = decode_field(read_file(path));
    std::ifstream f(path + ".json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path + ".json");
    nlohmann::json side;
    f >> side;
    SolutionField field;
    field.grid = blob.grid;
    field.values = std::move(blob.values);
    field.scheme = side.at("scheme").get<std::string>() == "picard" ? Scheme::Picard
                                                                    : Scheme::GoursatEuler;
    field.iterations = side.at("iterations").get<int>();
    field.residual = side.at("residual").get<double>();
    field.drift_id = side.at("drift_id").get<std::string>();
    field.sheet_seed = side.at("sheet_seed").get<std::uint64_t>();
    return field;
}

inline void save_malliavin(const MalliavinField& field, const std::string& path,
                           std::uint64_t sheet_seed = 0) {
    GridSpec packed = field.grid;
    packed.d = field.grid.d * field.grid.d;  // d*d payload per node
    write_file(path, encode_field(packed, sheet_seed, field.values));
    nlohmann::json side;
    side["base_i"] = field.base_i;
    side["base_j"] = field.base_j;
    side["level"] = field.level;
    side["regime"] = field.regime == MalliavinRegime::Bounded ? "bounded" : "small_time";
    side["tau"] = field.tau;
    side["d"] = field.grid.d;
    std::ofstream f(path + ".json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path + ".json");
    f << side.dump(2) << "\n";
}

inline MalliavinField load_malliavin(const std::string& path) {
    FieldBlob blob = decode_field(read_file(path));
    std::ifstream f(path + ".json", std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path + ".json");
    nlohmann::json side;
    f >> side;
    MalliavinField field;
    field.grid = blob.grid;
    field.grid.d = side.at("d").get<int>();
    if (field.grid.d * field.grid.d != blob.grid.d)
        throw std::runtime_error("malliavin payload is not d*d components");
    field.values = std::move(blob.values);
    field.base_i = side.at("base_i").get<int>();
    field.base_j = side.at("base_j").get<int>();
    field.level = side.at("level").get<int>();
    field.regime = side.at("regime").get<std::string>() == "small_time"
                       ? MalliavinRegime::SmallTime
                       : MalliavinRegime::Bounded;
    field.tau = side.at("tau").get<double>();
    return field;
}

}  // namespace sheetfield::io
