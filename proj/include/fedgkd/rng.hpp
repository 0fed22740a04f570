#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedgkd {

using Rng = std::mt19937_64;

// Stream tags keep independently derived seeds from colliding.
enum class Stream : std::uint64_t {
    init = 1,
    toy_train = 2,
    toy_test = 3,
    partition = 4,
    split = 5,
    sampling = 6,
    client = 7,
    verify = 8,
};

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hash a master seed together with any number of coordinates (round, client id, ...)
/// into a child seed. Order-sensitive, so (round, client) and (client, round) differ.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> coords = {}) noexcept {
    std::uint64_t h = splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream)));
    for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng make_rng(std::uint64_t master, Stream stream,
                    std::initializer_list<std::uint64_t> coords = {}) {
    return Rng(derive_seed(master, stream, coords));
}

}  // namespace fedgkd
