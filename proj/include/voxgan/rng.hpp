#pragma once

#include <cstdint>
#include <random>

namespace voxgan {

// Seedable random stream with a draw sequence that is identical across
// platforms for a given seed. The raw generator is std::mt19937_64 (fully
// specified by the standard); the uniform and normal mappings below are
// implemented explicitly instead of going through std::*_distribution,
// whose output is implementation-defined.
class RngStream {
public:
    RngStream() : RngStream(0) {}
    explicit RngStream(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    // Derives an independent stream for (seed, index), e.g. one per dataset item.
    static RngStream substream(std::uint64_t seed, std::uint64_t index);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return draws_; }

    std::uint64_t next_u64() {
        ++draws_;
        return gen_();
    }

    // Uniform on [0,1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal();

    // Uniform integer in [lo, hi] by rejection-free modulo of a wide draw.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

private:
    std::mt19937_64 gen_;
    std::uint64_t seed_ = 0;
    std::uint64_t draws_ = 0;
};

// SplitMix64; used to decorrelate derived seeds.
std::uint64_t mix_seed(std::uint64_t x);

}  // namespace voxgan
