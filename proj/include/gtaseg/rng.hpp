#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace gtaseg {

// splitmix64 step; used to derive independent stream seeds from (seed, tags).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. mt19937 output is pinned by the standard; distributions
// are hand-rolled so sequences do not depend on the standard library build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(mix_seed(seed, 0x5eedULL))) {}

    std::uint32_t next_u32() { return gen_(); }

    // in [0, 1)
    float uniform() { return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(gen_() % static_cast<std::uint32_t>(hi - lo + 1));
    }

    float normal(float sigma) {
        // Box-Muller, one value per call
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return sigma * std::sqrt(-2.0f * std::log(u1)) * std::cos(6.2831853071795864f * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937 gen_;
};

}  // namespace gtaseg
