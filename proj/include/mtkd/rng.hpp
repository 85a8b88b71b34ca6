#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace mtkd {

// SplitMix64 is the pipeline's only source of randomness. It is seedable,
// has portable bit-exact output on every platform (unlike the standard
// library distributions), and child streams are pure functions of
// (seed, tag path), which is what makes shards and checkpoints reproduce
// byte-for-byte for a fixed manifest seed.
class SplitMix64 {
public:
    explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double next_double(double lo, double hi) noexcept {
        return lo + (hi - lo) * next_double();
    }

    // Uniform in [0, bound), rejection-sampled to avoid modulo bias.
    std::uint64_t next_below(std::uint64_t bound) noexcept {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    // Stateless mix of (key, value); used to derive child streams.
    static constexpr std::uint64_t mix(std::uint64_t key, std::uint64_t value) noexcept {
        std::uint64_t z = key ^ (value + 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

// FNV-1a, 64-bit. Used for stream tags and for vocabulary checksums.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child seed for a tagged stream, e.g.
//   derive_stream(seed, {fnv1a("mask"), lang_idx, teacher_idx, line_idx}).
constexpr std::uint64_t derive_stream(std::uint64_t seed,
                                      std::initializer_list<std::uint64_t> tags) noexcept {
    std::uint64_t h = seed;
    for (const std::uint64_t t : tags) h = SplitMix64::mix(h, t);
    return h;
}

// Fisher-Yates, driven by the portable generator so shuffles replay exactly.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        using std::swap;
        swap(v[i - 1], v[j]);
    }
}

}  // namespace mtkd
