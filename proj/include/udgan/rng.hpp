#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace udgan {

// Deterministic random source. All stochastic pieces of the pipeline
// (weight init, shuffling, reparameterization noise, dropout masks) draw
// from one of these, seeded from a single master seed, so a run is fully
// reproducible. std::mt19937_64 output is pinned by the standard and the
// normal transform is our own Box-Muller, not the library distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed), base_seed_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = engine_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

    // Derive an independent child stream, e.g. rng.fork("stage1").
    Rng fork(std::string_view tag) const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto mix = [&h](std::uint64_t byte) {
            h ^= byte;
            h *= 0x100000001b3ull;
        };
        for (char c : tag) mix(static_cast<std::uint8_t>(c));
        for (int i = 0; i < 8; ++i) mix((base_seed_ >> (8 * i)) & 0xff);
        return Rng(h);
    }

private:
    std::mt19937_64 engine_;
    std::uint64_t base_seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace udgan
