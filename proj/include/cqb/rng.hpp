#pragma once

#include <array>
#include <cstdint>

#include "cqb/math.hpp"

namespace cqb {

// Threefry-2x64, 20 rounds (Salmon et al., "Parallel random numbers: as easy
// as 1, 2, 3"). Counter-based: every (counter, key) block is an independent
// uniform 128-bit value, so streams never need sequential state.
inline std::array<std::uint64_t, 2> threefry2x64(std::array<std::uint64_t, 2> ctr,
                                                 std::array<std::uint64_t, 2> key) {
    constexpr std::uint64_t kParity = 0x1BD11BDAA9FC1A22ull;
    constexpr int kRot[8] = {16, 42, 12, 31, 16, 32, 24, 21};
    auto rotl = [](std::uint64_t v, int r) {
        return (v << r) | (v >> (64 - r));
    };
    const std::uint64_t ks[3] = {key[0], key[1], kParity ^ key[0] ^ key[1]};
    std::uint64_t x0 = ctr[0] + ks[0];
    std::uint64_t x1 = ctr[1] + ks[1];
    for (int n = 0; n < 20; ++n) {
        x0 += x1;
        x1 = rotl(x1, kRot[n % 8]);
        x1 ^= x0;
        if (n % 4 == 3) {
            const std::uint64_t j = static_cast<std::uint64_t>(n / 4) + 1; // 1..5
            x0 += ks[j % 3];
            x1 += ks[(j + 1) % 3] + j;
        }
    }
    return {x0, x1};
}

// Per-round randomness channels. One uniform block is addressed by
// (seed, round t, channel, lane index); coupled queues that query the same
// address always see the same value.
enum class Channel : std::uint64_t {
    ArrivalCoin = 1,
    ArrivalContext = 2,
    ServiceCoin = 3,
    ExploreCoin = 4,
    ServerPick = 5,
};

class RandomnessStream {
public:
    RandomnessStream() : seed_(0) {}
    explicit RandomnessStream(std::uint64_t master_seed) : seed_(master_seed) {}

    std::uint64_t master_seed() const { return seed_; }

    std::uint64_t bits(std::uint64_t t, Channel ch, std::uint64_t idx = 0) const {
        const std::uint64_t chv = static_cast<std::uint64_t>(ch);
        return threefry2x64({t, idx}, {seed_, 0x636862ull ^ (chv << 32)})[0];
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform(std::uint64_t t, Channel ch, std::uint64_t idx = 0) const {
        return static_cast<double>(bits(t, ch, idx) >> 11) * 0x1.0p-53;
    }

    // Uniform on the open interval (0, 1); safe as an inverse-CDF argument.
    double uniform_open(std::uint64_t t, Channel ch, std::uint64_t idx = 0) const {
        return (static_cast<double>(bits(t, ch, idx) >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via inverse CDF; one block per draw.
    double normal(std::uint64_t t, Channel ch, std::uint64_t idx = 0) const {
        return normal_icdf(uniform_open(t, ch, idx));
    }

    // Uniform integer in [0, n).
    std::uint64_t pick(std::uint64_t t, Channel ch, std::uint64_t n,
                       std::uint64_t idx = 0) const {
        const std::uint64_t v =
            static_cast<std::uint64_t>(uniform(t, ch, idx) * static_cast<double>(n));
        return v >= n ? n - 1 : v;
    }

private:
    std::uint64_t seed_;
};

// Keyed derivation of child seeds (replications, instance generation, ...).
// Pure in (master, salt, index); distinct salts give unrelated families.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t salt,
                                 std::uint64_t index = 0) {
    return threefry2x64({salt, index}, {master, 0xD1B54A32D192ED03ull})[0];
}

namespace seed_salt {
constexpr std::uint64_t kInstance = 0x11;  // instance generation
constexpr std::uint64_t kRun = 0x22;       // per-rep run streams
constexpr std::uint64_t kPsi = 0x33;       // psi diagnostic draws
constexpr std::uint64_t kIndependent = 0x44;
constexpr std::uint64_t kProbe = 0x55;     // test/audit probes
} // namespace seed_salt

} // namespace cqb
