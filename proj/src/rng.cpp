#include "voxgan/rng.hpp"

#include <cmath>

namespace voxgan {

std::uint64_t mix_seed(std::uint64_t x) {
    // SplitMix64 finalizer.
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

RngStream RngStream::substream(std::uint64_t seed, std::uint64_t index) {
    return RngStream(mix_seed(mix_seed(seed) ^ (0x100000001b3ull * (index + 1))));
}

double RngStream::normal() {
    // Box-Muller, cosine branch only. Two uniforms are consumed per value so
    // the draw count does not depend on hidden cache state.
    double u1 = 1.0 - uniform01();  // (0, 1]; keeps log() finite
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

}  // namespace voxgan
