#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace coqm {

// philox4x32-10 counter-based generator (Salmon et al., SC'11).
// Streams are addressed purely by (key, counter), so any number of
// independent streams can be derived statelessly from a master seed and
// integer stream ids; results do not depend on thread scheduling.
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    Philox4x32() = default;
    Philox4x32(std::uint32_t key0, std::uint32_t key1) : key_{key0, key1} {}

    static Block round10(Block ctr, std::array<std::uint32_t, 2> key) {
        for (int r = 0; r < 10; ++r) {
            const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            ctr = Block{hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return ctr;
    }

    Block operator()(std::uint64_t counter_lo, std::uint64_t counter_hi = 0) const {
        return round10({static_cast<std::uint32_t>(counter_lo),
                        static_cast<std::uint32_t>(counter_lo >> 32),
                        static_cast<std::uint32_t>(counter_hi),
                        static_cast<std::uint32_t>(counter_hi >> 32)},
                       key_);
    }

private:
    std::array<std::uint32_t, 2> key_{0, 0};
};

// 64-bit finalizer used to spread seed/stream-id tuples over the key space.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// A forward-only stream of uniform variates addressed by (seed, ids...).
// Identical construction gives identical output on every platform, thread
// count and run; substream() derives an independent child stream.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(splitmix64(seed)) { rekey(); }

    RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> ids)
        : state_(splitmix64(seed)) {
        for (std::uint64_t id : ids) state_ = splitmix64(state_ ^ id);
        rekey();
    }

    RngStream substream(std::uint64_t id) const {
        RngStream s(*this);
        s.state_ = splitmix64(s.state_ ^ (id + 0x5851F42D4C957F2Dull));
        s.rekey();
        s.counter_ = 0;
        s.have_ = 0;
        return s;
    }

    std::uint32_t next_u32() {
        if (have_ == 0) {
            buf_ = engine_(counter_++);
            have_ = 4;
        }
        return buf_[4 - have_--];
    }

    std::uint64_t next_u64() {
        const std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

private:
    void rekey() {
        const std::uint64_t k = splitmix64(state_ ^ 0xA5A5A5A5A5A5A5A5ull);
        engine_ = Philox4x32(static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32));
    }

    std::uint64_t state_ = 0;
    Philox4x32 engine_;
    std::uint64_t counter_ = 0;
    Philox4x32::Block buf_{};
    int have_ = 0;
};

// n draws from the categorical distribution given by `probs` (need not be
// perfectly normalized; the last cell absorbs the numerical remainder).
template <std::size_t N>
std::array<std::int64_t, N> sample_multinomial(RngStream& rng, std::int64_t n,
                                               const std::array<double, N>& probs) {
    std::array<double, N> cdf{};
    double acc = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        acc += probs[i];
        cdf[i] = acc;
    }
    cdf[N - 1] = 1.0;
    std::array<std::int64_t, N> counts{};
    for (std::int64_t i = 0; i < n; ++i) {
        const double u = rng.next_double();
        std::size_t c = 0;
        while (c + 1 < N && u >= cdf[c]) ++c;
        ++counts[c];
    }
    return counts;
}

inline std::int64_t sample_binomial(RngStream& rng, std::int64_t n, double p) {
    std::int64_t k = 0;
    for (std::int64_t i = 0; i < n; ++i)
        if (rng.next_double() < p) ++k;
    return k;
}

} // namespace coqm
