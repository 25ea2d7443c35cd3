#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dd {

// mt19937 with hand-rolled mappings so streams are identical across
// standard library implementations.
struct Rng {
    std::mt19937 eng;

    explicit Rng(uint32_t seed) : eng(seed) {}

    uint32_t next() { return eng(); }

    // uniform in [0, 1) with 24 bits of resolution
    float u01() { return static_cast<float>(eng() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float a, float b) { return a + (b - a) * u01(); }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) { return eng() % n; }

    // Box-Muller, one value per call
    float normal() {
        float u1 = u01();
        float u2 = u01();
        if (u1 < 1e-12f) u1 = 1e-12f;
        return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.2831853f * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = below(static_cast<uint32_t>(i));
            std::swap(v[i - 1], v[j]);
        }
    }
};

}  // namespace dd
