#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace evogate {

// Deterministic 64-bit generator (splitmix64). All distributions below are
// spelled out in code rather than taken from <random>, so streams are stable
// across standard library implementations. Checkpointable as a single u64.
class Rng {
public:
    Rng() : state_(0x9E3779B97F4A7C15ULL) {}
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection from a power-of-two mask, so the
    // result is exactly uniform and the algorithm is fixed forever.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t mask = n - 1;
        mask |= mask >> 1;
        mask |= mask >> 2;
        mask |= mask >> 4;
        mask |= mask >> 8;
        mask |= mask >> 16;
        mask |= mask >> 32;
        for (;;) {
            std::uint64_t v = next_u64() & mask;
            if (v < n) return v;
        }
    }

    // Standard normal via Box-Muller; two uniforms per draw, no cached state.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Derives an independent stream from a seed and a label, so subsystems
    // (population init, evolution, training, gating, ...) never share state.
    static Rng derive(std::uint64_t seed, std::string_view label) {
        std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
        for (char c : label) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ULL;
        }
        Rng mixer(seed ^ h);
        mixer.next_u64();
        return Rng(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

// FNV-1a over raw bytes; used for dedupe keys and run ids.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace evogate
