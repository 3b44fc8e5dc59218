#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace sheetfield::rng {

/// Philox4x32-10 counter-based generator. A draw is a pure function of
/// (key, counter), so any cell of any replication can be regenerated in
/// isolation and in any order, including concurrently.
struct Philox4x32 {
    static constexpr std::uint32_t kMulA = 0xD2511F53u;
    static constexpr std::uint32_t kMulB = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeylA = 0x9E3779B9u;
    static constexpr std::uint32_t kWeylB = 0xBB67AE85u;

    static std::array<std::uint32_t, 4> block(std::uint64_t key,
                                              std::uint64_t ctr_hi,
                                              std::uint64_t ctr_lo) {
        std::uint32_t c0 = static_cast<std::uint32_t>(ctr_lo);
        std::uint32_t c1 = static_cast<std::uint32_t>(ctr_lo >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(ctr_hi);
        std::uint32_t c3 = static_cast<std::uint32_t>(ctr_hi >> 32);
        std::uint32_t k0 = static_cast<std::uint32_t>(key);
        std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * c0;
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * c2;
            const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
            const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n0 = hi1 ^ c1 ^ k0;
            const std::uint32_t n1 = lo1;
            const std::uint32_t n2 = hi0 ^ c3 ^ k1;
            const std::uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += kWeylA;
            k1 += kWeylB;
        }
        return {c0, c1, c2, c3};
    }
};

/// Maps 64 random bits to the open-closed interval (0, 1].
inline double bits_to_unit(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 1.0) * 0x1p-53;
}

/// splitmix64 finalizer, used to derive independent keys per purpose.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Disjoint counter spaces for the different consumers of randomness.
enum class Domain : std::uint64_t {
    SheetCell = 1,
    ValidateSample = 2,
    Generic = 3,
};

inline std::uint64_t make_key(std::uint64_t seed, Domain domain) {
    return mix64(seed ^ (static_cast<std::uint64_t>(domain) * 0xA24BAED4963EE407ull));
}

/// Two unit uniforms from one Philox block.
inline void uniform_pair(std::uint64_t key, std::uint64_t idx, std::uint64_t sub,
                         double& u1, double& u2) {
    const auto w = Philox4x32::block(key, sub, idx);
    u1 = bits_to_unit((static_cast<std::uint64_t>(w[0]) << 32) | w[1]);
    u2 = bits_to_unit((static_cast<std::uint64_t>(w[2]) << 32) | w[3]);
}

/// Standard normal draw addressed by (key, idx, sub). Box-Muller.
inline double gaussian(std::uint64_t key, std::uint64_t idx, std::uint64_t sub) {
    double u1, u2;
    uniform_pair(key, idx, sub, u1, u2);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Uniform draw on [lo, hi) addressed the same way.
inline double uniform(std::uint64_t key, std::uint64_t idx, std::uint64_t sub,
                      double lo, double hi) {
    double u1, u2;
    uniform_pair(key, idx, sub, u1, u2);
    (void)u2;
    return lo + (u1 - 0x1p-53) * (hi - lo);
}

}  // namespace sheetfield::rng
