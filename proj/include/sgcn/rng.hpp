#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace sgcn {

// mt19937_64 with hand-rolled distributions: std::uniform_real_distribution and
// friends are implementation-defined, which would break byte-identical outputs
// across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds, rejection sampling to avoid modulo bias
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t range = uint64_t(hi - lo) + 1;
        if (range == 0) return int64_t(gen_());  // full 64-bit span
        uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return lo + int64_t(x % range);
    }

    // Box-Muller; consumes exactly two draws per call
    double normal(double mean = 0.0, double sd = 1.0) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + sd * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(uniform_int(0, int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// splitmix64 mix; derives independent stream seeds from a base seed
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace sgcn
