#pragma once

#include <cstdint>
#include <utility>

#include "rehom/vecmat.hpp"

// Counter-based random numbers.  Every draw in the project is a pure
// function of (seed, stream id, draw index), which gives three properties
// the experiments rely on:
//   * bit-for-bit reproducibility from a manifest, independent of thread
//     count or evaluation order;
//   * O(1) random access, so environment node noise can be recomputed on
//     demand or cached without changing any value;
//   * statistically independent streams keyed by structured ids (path
//     index, lattice node, chain/step/batch slot).
//
// The generator is the 10-round Philox 2x64 block cipher; normals come
// from the high 53 bits through Wichura's PPND16 inverse-CDF
// approximation (accurate to ~1e-15, monotone, branch-light).

namespace rehom {

struct U64Pair {
    std::uint64_t a, b;
};

/// 10-round Philox 2x64 keyed permutation of the counter (c0, c1).
inline U64Pair philox2x64(std::uint64_t key, std::uint64_t c0, std::uint64_t c1) {
    constexpr std::uint64_t kMul = 0xD2B74407B1CE6E93ULL;
    constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;
    for (int round = 0; round < 10; ++round) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(kMul) * c0;
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        const std::uint64_t lo = static_cast<std::uint64_t>(prod);
        c0 = hi ^ key ^ c1;
        c1 = lo;
        key += kWeyl;
    }
    return {c0, c1};
}

/// SplitMix64 finalizer; used to hash structured ids into stream ids.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t combine64(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

// Domain-separation tags: draws made for different purposes never share a
// stream even when their structured ids collide numerically.
enum class StreamTag : std::uint64_t {
    kEnvShift = 1,
    kEnvNode = 2,
    kPath = 3,
    kCloud = 4,
    kCouple = 5,
    kGeneric = 6,
};

inline std::uint64_t stream_id(StreamTag tag, std::uint64_t a = 0, std::uint64_t b = 0,
                               std::uint64_t c = 0) {
    std::uint64_t h = mix64(static_cast<std::uint64_t>(tag));
    h = combine64(h, a);
    h = combine64(h, b);
    h = combine64(h, c);
    return h;
}

/// Uniform double in the open interval (0,1) from 53 high bits.
inline double u64_to_open_unit(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

/// Inverse of the standard normal CDF (Wichura's PPND16 / AS 241).
double inverse_normal_cdf(double p);

/// One word of the (seed, stream, index) keyed sequence.
inline std::uint64_t word_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    const U64Pair blk = philox2x64(seed, idx >> 1, stream);
    return (idx & 1) ? blk.b : blk.a;
}

inline double uniform_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    return u64_to_open_unit(word_at(seed, stream, idx));
}

inline double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    return inverse_normal_cdf(uniform_at(seed, stream, idx));
}

/// Sequential cursor over one stream.  Buffers the two words of each
/// Philox block so consecutive draws cost half a block cipher call.
class NoiseCursor {
  public:
    NoiseCursor(std::uint64_t seed, std::uint64_t stream)
        : seed_(seed), stream_(stream) {}

    double uniform() { return u64_to_open_unit(next_word()); }
    double normal() { return inverse_normal_cdf(uniform()); }

    void fill_normal(Vec& v) {
        for (int i = 0; i < v.n; ++i) v[i] = normal();
    }

    Vec normal_vec(int dim) {
        Vec v(dim);
        fill_normal(v);
        return v;
    }

    /// Index of the next word to be consumed (for audit/debug).
    std::uint64_t position() const { return next_; }

  private:
    std::uint64_t next_word() {
        if ((next_ & 1) == 0) buf_ = philox2x64(seed_, next_ >> 1, stream_);
        const std::uint64_t w = (next_ & 1) ? buf_.b : buf_.a;
        ++next_;
        return w;
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t next_ = 0;
    U64Pair buf_{0, 0};
};

}  // namespace rehom
