#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace perpo {

/// Seed derivation. One root seed is threaded through the whole workflow;
/// each stage draws its own seed as splitmix64(root ^ fnv1a64(tag)), and
/// per-item seeds additionally fold in the item index. Documented in the
/// README so runs are reproducible from a single number.
namespace seeds {

constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t root, std::string_view tag) {
    return splitmix64(root ^ fnv1a64(tag));
}

constexpr std::uint64_t derive(std::uint64_t root, std::string_view tag, std::uint64_t index) {
    return splitmix64(derive(root, tag) ^ splitmix64(index + 0x51ed2701ull));
}

}  // namespace seeds

/// Deterministic sampling helpers. std::uniform_int_distribution and
/// std::normal_distribution are implementation-defined, so anything that
/// must reproduce bytewise across platforms goes through these instead.
namespace rng {

using Engine = std::mt19937_64;

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform53(Engine& eng) {
    return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n). Modulo bias is negligible for the small n
/// used here and keeps the draw sequence portable.
inline std::uint64_t bounded(Engine& eng, std::uint64_t n) {
    return eng() % n;
}

/// Standard normal via Box-Muller. Consumes two uniforms per draw, no
/// cached second value, so the stream position is predictable.
double gaussian(Engine& eng);

/// In-place Fisher-Yates shuffle using bounded().
template <typename T>
void shuffle(std::vector<T>& v, Engine& eng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(bounded(eng, i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace rng

namespace fmt {

/// Shortest text form that round-trips the double exactly (%.17g).
std::string g17(double x);

/// Compact form for CSV cells (%.9g): deterministic, locale-free.
std::string g9(double x);

/// Round to `places` decimal places (ties away from zero), normalizing -0.
double round_places(double x, int places);

}  // namespace fmt

}  // namespace perpo
