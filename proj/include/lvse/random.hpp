#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace lvse {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent, order-free sub-seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix_seed(seed);
    for (auto p : path) s = mix_seed(s ^ mix_seed(p + 0x632be59bd9b4e019ULL));
    return s;
}

// Stream tags keep the generators decoupled from each other.
enum class Stream : std::uint64_t {
    weather = 1,
    price = 2,
    customer = 3,
    assignment = 4,
    ev = 5,
    init = 6,
    shuffle = 7,
    noise = 8,
    predict = 9,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
    return Rng(derive_seed(seed, {static_cast<std::uint64_t>(stream), index}));
}

}  // namespace lvse
