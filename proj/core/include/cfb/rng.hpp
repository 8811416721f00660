#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace cfb {

// splitmix64 mix, used to derive well-separated child seeds from one root seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic uniform/normal generator. Avoids std::uniform_real_distribution
// so that streams are identical across standard library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    // uniform on [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform on (0, 1), safe for logs
    double uniform_open() {
        double u = uniform01();
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via the Box-Muller transform (two uniforms per draw)
    double normal() {
        double u1 = uniform_open();
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // integer in [0, n); n is tiny relative to 2^64 so modulo bias is negligible
    std::uint64_t below(std::uint64_t n) { return engine_() % n; }

    // independent generator for a named substream
    Rng child(std::uint64_t stream) const { return Rng(split_seed(seed_, stream)); }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace cfb
