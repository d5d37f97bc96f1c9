#pragma once

#include <cmath>
#include <cstdint>

namespace ddcm {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// The same seed yields the same value sequence on every platform; all
// randomness in the toolkit (weight init, sampling, augmentation, loss
// weights) flows through instances of this state.
class RngState {
public:
    explicit RngState(std::uint64_t seed = 0) {
        std::uint64_t x = seed;
        for (auto& word : s_) {
            x += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Multiply-shift bounded draw; bias is < 2^-64 * n, irrelevant here
        // and fully deterministic.
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    int next_int(int lo, int hi_exclusive) {
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi_exclusive - lo)));
    }

    bool bernoulli(double p = 0.5) { return uniform() < p; }

    // Box-Muller; consumes exactly two uniforms per pair of normals.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * (r * std::cos(theta));
    }

    // Derives an independent stream; used to give the data sampler, loss
    // weighting and weight init their own sequences from one run seed.
    RngState fork(std::uint64_t stream) const {
        RngState child(s_[0] ^ (0x632be59bd9b4e019ULL * (stream + 1)));
        return child;
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace ddcm
