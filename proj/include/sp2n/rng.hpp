#pragma once

#include <array>
#include <cstdint>

namespace sp2n {

// splitmix64, used to expand a single 64-bit seed into generator state.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ (Blackman & Vigna). Seeded through splitmix64 so that any
// 64-bit seed, including 0, yields a well-mixed state. Streams are selected
// with long_jump(), which advances the sequence by 2^192 steps, so parallel
// batches with distinct stream ids never overlap.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
        for (std::uint64_t i = 0; i < stream; ++i) long_jump();
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1) from the top 53 bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    void long_jump() {
        static constexpr std::array<std::uint64_t, 4> jump = {
            0x76e15d3efefdcbbfULL, 0xc5004e441c522fb3ULL,
            0x77710069854ee241ULL, 0x39109bb02acbe635ULL};
        std::array<std::uint64_t, 4> acc = {0, 0, 0, 0};
        for (std::uint64_t word : jump) {
            for (int bit = 0; bit < 64; ++bit) {
                if (word & (1ULL << bit)) {
                    for (int i = 0; i < 4; ++i) acc[i] ^= state_[i];
                }
                next_u64();
            }
        }
        state_ = acc;
    }

    std::array<std::uint64_t, 4> state() const { return state_; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_;
};

}  // namespace sp2n
