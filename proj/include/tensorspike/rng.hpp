#pragma once

#include <cmath>
#include <cstdint>

namespace tensorspike {

// Counter-based deterministic RNG: every variate is a pure function of
// (seed, stream, index), so sampling order and thread count never affect
// output. Streams separate independent uses (signal, noise, integrator, ...).
namespace rng {

inline std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t hash3(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    std::uint64_t h = splitmix(seed ^ 0x6a09e667f3bcc909ULL);
    h = splitmix(h ^ stream);
    return splitmix(h ^ idx);
}

// Uniform in the open interval (0,1).
inline double uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    std::uint64_t bits = hash3(seed, stream, idx);
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse normal CDF (Wichura AS241, double precision over (0,1)).
double inverse_normal_cdf(double p);

inline double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t idx) {
    return inverse_normal_cdf(uniform(seed, stream, idx));
}

// Stream ids used across the library.
enum Stream : std::uint64_t {
    kSignal = 1,
    kNoise = 2,
    kAmpInit = 3,
    kIntegrator = 4,
    kOracle = 5,
    kChannel = 6,
};

}  // namespace rng
}  // namespace tensorspike
