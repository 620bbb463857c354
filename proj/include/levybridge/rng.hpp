#ifndef LEVYBRIDGE_RNG_HPP
#define LEVYBRIDGE_RNG_HPP

// Counter-split random streams. Stream k of master seed s is seeded from
// SplitMix64 applied to (s, k), so path k's draws never depend on how many
// other paths exist or which thread produced them.

#include <cstdint>
#include <limits>

namespace levybridge {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256++; satisfies UniformRandomBitGenerator.
class RngStream {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed = 0) { reseed(seed, 0); }
    RngStream(std::uint64_t master_seed, std::uint64_t stream_index) { reseed(master_seed, stream_index); }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
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

    /// Uniform on the open interval (0,1), 53-bit resolution.
    double uniform() {
        const std::uint64_t bits = (*this)() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    /// Stream for sub-task `index` of this stream's seed family.
    static RngStream derive(std::uint64_t master_seed, std::uint64_t stream_index) {
        return RngStream(master_seed, stream_index);
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    void reseed(std::uint64_t master_seed, std::uint64_t stream_index) {
        std::uint64_t sm = master_seed;
        const std::uint64_t a = splitmix64(sm);
        std::uint64_t st = a ^ (stream_index * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL);
        for (auto& w : s_) w = splitmix64(st);
        if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
    }

    std::uint64_t s_[4]{};
};

}  // namespace levybridge

#endif
