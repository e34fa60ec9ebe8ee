#pragma once

#include <cstdint>
#include <random>

#include "crush/common.hpp"

namespace crush {

// Counter-based child-seed derivation (splitmix64 output function applied at
// master + (index+1)*golden). Child streams are independent of each other and
// of how many draws were taken from the master.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double gaussian() { return normal_(gen_); }

    Vec gaussian_vec(std::size_t d) {
        Vec v(d);
        for (auto& x : v) x = normal_(gen_);
        return v;
    }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    // index in [0, n)
    std::size_t uniform_index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace crush
