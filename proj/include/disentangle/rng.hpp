#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace disentangle {

namespace detail {
// splitmix64 finalizer; passes the usual statistical batteries.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based generator keyed by (seed, stream). Output i is a pure
/// function of (seed, stream, i), so parallel consumers with distinct
/// streams are bit-reproducible regardless of scheduling.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : base_(detail::mix64(detail::mix64(seed) ^
                              (stream * 0xd1b54a32d192ed03ULL + 0x9e3779b97f4a7c15ULL))) {}

    std::uint64_t next_u64() { return detail::mix64(base_ + counter_++ * 0x9e3779b97f4a7c15ULL); }

    /// Uniform on [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    /// Standard normal via Box-Muller; pairs are cached.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] keeps the log finite.
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
        const double u2 = next_double();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Hash-chain a path of indices onto a base seed (for per-cell streams).
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = detail::mix64(seed);
    for (std::uint64_t v : path) s = detail::mix64(s ^ (v + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2)));
    return s;
}

}  // namespace disentangle
