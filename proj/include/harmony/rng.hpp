#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace harmony {

/// Purpose of a random stream inside one replicate.
enum class StreamRole : std::uint32_t {
    RctOutcomes = 1,
    EcOutcomes = 2,
    Covariates = 3,
    Bootstrap = 4,
    Resample = 5,
    Spike = 6,
    SubSeed = 7,
};

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The 64-bit seed is the
/// key; the upper counter words hold (replicate, role) and the lower words count blocks,
/// so every (seed, replicate, role) triple is an independent stream that can be created
/// in any order on any thread.
class Philox4x32 {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;

    Philox4x32(std::uint64_t seed, std::uint32_t replicate, StreamRole role)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_{replicate, static_cast<std::uint32_t>(role)} {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (used_ == 4) {
            buffer_ = generate(Block{static_cast<std::uint32_t>(block_),
                                     static_cast<std::uint32_t>(block_ >> 32), stream_[0], stream_[1]},
                               key_);
            ++block_;
            used_ = 0;
        }
        return buffer_[used_++];
    }

    /// Raw bijection: 10 rounds of Philox on one counter block.
    static Block generate(Block ctr, std::array<std::uint32_t, 2> key) {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += 0x9E3779B9u;
                key[1] += 0xBB67AE85u;
            }
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> stream_;
    std::uint64_t block_ = 0;
    Block buffer_{};
    int used_ = 4;
};

/// Seed for a nested experiment (e.g. the bootstrap inside one Monte-Carlo replicate).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t replicate) {
    Philox4x32 g(seed, replicate, StreamRole::SubSeed);
    const std::uint64_t lo = g();
    const std::uint64_t hi = g();
    return (hi << 32) | lo;
}

}  // namespace harmony
