#pragma once
// Deterministic stream splitting for parallel replicas.
//
// Every random stream is keyed by (master_seed, module_tag, replica_index):
// the tag is hashed with FNV-1a, the three words are pushed through the
// splitmix64 finalizer, and the result seeds a std::mt19937_64. Replica r of
// module m therefore always sees the same stream no matter how work is
// distributed over threads, and distinct modules never collide even under the
// same master seed.

#include <cstdint>
#include <random>
#include <string_view>

namespace langevin {

// 64-bit FNV-1a, used only to turn string tags into integers.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer (Steele, Lea, Flood); bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Collapse (seed, tag, replica) into one well-mixed 64-bit seed. The
// golden-ratio stride keeps consecutive replica indices far apart before
// mixing.
constexpr std::uint64_t mix_seed(std::uint64_t master_seed, std::string_view module_tag,
                                 std::uint64_t replica = 0) noexcept {
    std::uint64_t z = mix64(master_seed + 0x9e3779b97f4a7c15ull);
    z = mix64(z ^ fnv1a(module_tag));
    z = mix64(z + replica * 0x9e3779b97f4a7c15ull);
    return z;
}

// Engine plus the distributions we actually use. normal_distribution caches a
// spare deviate, so streams must not be shared between threads; each replica
// owns its RngStream.
struct RngStream {
    std::mt19937_64 engine;
    std::normal_distribution<double> normal{0.0, 1.0};

    explicit RngStream(std::uint64_t seed) : engine(seed) {}

    double gauss() { return normal(engine); }
    // Uniform on (0,1); rejects the exact 0 that generate_canonical can emit
    // so inverse-CDF samplers never evaluate at an endpoint.
    double unif01() {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double x;
        do {
            x = u(engine);
        } while (x <= 0.0 || x >= 1.0);
        return x;
    }
};

inline RngStream make_stream(std::uint64_t master_seed, std::string_view module_tag,
                             std::uint64_t replica = 0) {
    return RngStream{mix_seed(master_seed, module_tag, replica)};
}

} // namespace langevin
