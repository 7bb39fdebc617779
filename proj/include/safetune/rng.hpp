#pragma once

#include <cstdint>
#include <random>

namespace safetune {

/// All randomness in the project is drawn from 64-bit Mersenne Twister engines.
using Engine = std::mt19937_64;

/// Identifiers of the independent random sub-streams derived from one run seed.
enum class Stream : std::uint64_t {
    kernel_sample = 1,
    plant_noise = 2,
    synthetic_noise = 3,
    synthetic_draw = 4,
    seed_choice = 5,
};

/// Engine for the sub-stream (seed, stream, index); distinct triples give
/// decorrelated engines through std::seed_seq.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t index = 0) {
    auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(seed), hi(seed), lo(stream), hi(stream), lo(index), hi(index)};
    return Engine(seq);
}

inline Engine make_engine(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return make_engine(seed, static_cast<std::uint64_t>(stream), index);
}

}  // namespace safetune
