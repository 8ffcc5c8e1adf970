#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <vector>

#include "heatlens/error.hpp"

namespace heatlens {

// Philox4x32-10 counter-based generator. A block is a pure function of
// (key, counter), so any (seed, stream, position) triple can be replayed
// independently of draw order or thread scheduling.
namespace philox {

inline constexpr uint32_t MUL_A = 0xD2511F53u;
inline constexpr uint32_t MUL_B = 0xCD9E8D57u;
inline constexpr uint32_t WEYL_A = 0x9E3779B9u;
inline constexpr uint32_t WEYL_B = 0xBB67AE85u;

inline std::array<uint32_t, 4> block(std::array<uint32_t, 2> key,
                                     std::array<uint32_t, 4> ctr) {
    for (int round = 0; round < 10; ++round) {
        uint64_t p0 = uint64_t(MUL_A) * ctr[0];
        uint64_t p1 = uint64_t(MUL_B) * ctr[2];
        uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
        uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += WEYL_A;
        key[1] += WEYL_B;
    }
    return ctr;
}

} // namespace philox

// splitmix64; used only to hash substream labels into well-spread stream ids.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// FNV-1a 64-bit, used for file and buffer checksums.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

// Deterministic stream of uniform variates drawn from Philox blocks.
// key = seed, counter = (stream id, block position). Substreams derive a new
// stream id by hashing, so e.g. per-zone or per-tree streams never overlap
// in practice and never depend on evaluation order.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    Rng substream(uint64_t label) const {
        return Rng(seed_, splitmix64(stream_ ^ splitmix64(label ^ 0xA5A5A5A5A5A5A5A5ull)));
    }

    uint32_t next_u32() {
        if (have_ == 0) refill();
        return buf_[--have_];
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // [0,1) with 53 random bits.
    double next_double() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * next_double(); }

    // Unbiased integer in [0, n) via rejection.
    uint64_t below(uint64_t n) {
        if (n == 0) throw ValidationError("rng: below(0)");
        uint64_t threshold = (~n + 1) % n; // 2^64 mod n
        for (;;) {
            uint64_t v = next_u64();
            if (v >= threshold) return v % n;
        }
    }

    // Standard normal via Box-Muller; second variate cached.
    double normal() {
        if (have_normal_) {
            have_normal_ = false;
            return cached_normal_;
        }
        double u1, u2;
        do { u1 = next_double(); } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), order produced by partial Fisher-Yates.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        if (k > n) throw ValidationError("rng: sample size exceeds population");
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t(0));
        for (size_t i = 0; i < k; ++i) {
            size_t j = i + size_t(below(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k);
        return idx;
    }

private:
    void refill() {
        std::array<uint32_t, 2> key = {uint32_t(seed_), uint32_t(seed_ >> 32)};
        std::array<uint32_t, 4> ctr = {uint32_t(pos_), uint32_t(pos_ >> 32),
                                       uint32_t(stream_), uint32_t(stream_ >> 32)};
        buf_ = philox::block(key, ctr);
        ++pos_;
        have_ = 4;
    }

    uint64_t seed_;
    uint64_t stream_;
    uint64_t pos_ = 0;
    std::array<uint32_t, 4> buf_{};
    int have_ = 0;
    bool have_normal_ = false;
    double cached_normal_ = 0.0;
};

} // namespace heatlens
