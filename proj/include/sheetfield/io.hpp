#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sheetfield/grid.hpp"
#include "sheetfield/sheet.hpp"

namespace sheetfield::io {

// Grid field container format, shared by sheets, solution fields and
// Malliavin fields (the latter with a d*d payload per node):
//   bytes 0..7   magic "SHTFLD\0\0"
//   bytes 8..11  format version (u32 LE)
//   bytes 12..15 reserved (zero)
//   u32 n_s, u32 n_t, u32 components, u32 reserved
//   f64 s_max, f64 t_max, u64 seed
//   payload: node values, f64 LE, s-major then t then component.

inline constexpr char kMagic[8] = {'S', 'H', 'T', 'F', 'L', 'D', '\0', '\0'};
inline constexpr std::uint32_t kVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFF));
}
inline void put_f64(std::string& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) throw std::runtime_error("field file truncated");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
        p += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
};

}  // namespace detail

struct FieldBlob {
    GridSpec grid;             // d = components of the payload
    std::uint64_t seed = 0;
    std::vector<double> values;
};

inline std::string encode_field(const GridSpec& grid, std::uint64_t seed,
                                const std::vector<double>& values) {
    if (values.size() != grid.value_count())
        throw std::invalid_argument("encode_field: payload size mismatch");
    std::string out;
    out.reserve(48 + values.size() * 8);
    out.append(kMagic, 8);
    detail::put_u32(out, kVersion);
    detail::put_u32(out, 0);
    detail::put_u32(out, static_cast<std::uint32_t>(grid.n_s));
    detail::put_u32(out, static_cast<std::uint32_t>(grid.n_t));
    detail::put_u32(out, static_cast<std::uint32_t>(grid.d));
    detail::put_u32(out, 0);
    detail::put_f64(out, grid.s_max);
    detail::put_f64(out, grid.t_max);
    detail::put_u64(out, seed);
    for (double v : values) detail::put_f64(out, v);
    return out;
}

inline FieldBlob decode_field(const std::string& bytes) {
    if (bytes.size() < 48 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw std::runtime_error("not a field file (bad magic)");
    detail::Reader r{reinterpret_cast<const unsigned char*>(bytes.data()) + 8,
                     reinterpret_cast<const unsigned char*>(bytes.data()) + bytes.size()};
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw std::runtime_error("unsupported field file version");
    (void)r.u32();
    FieldBlob blob;
    blob.grid.n_s = static_cast<int>(r.u32());
    blob.grid.n_t = static_cast<int>(r.u32());
    blob.grid.d = static_cast<int>(r.u32());
    (void)r.u32();
    blob.grid.s_max = r.f64();
    blob.grid.t_max = r.f64();
    blob.seed = r.u64();
    blob.grid.validate();
    blob.values.resize(blob.grid.value_count());
    for (double& v : blob.values) v = r.f64();
    return blob;
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void save_sheet(const SheetPath& sheet, const std::string& path) {
    write_file(path, encode_field(sheet.grid(), sheet.seed(),
                                  std::vector<double>(sheet.values().begin(), sheet.values().end())));
}

inline SheetPath load_sheet(const std::string& path) {
    FieldBlob blob = decode_field(read_file(path));
    return SheetPath(blob.grid, blob.seed, std::move(blob.values));
}

}  // namespace sheetfield::io
