#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tensorspike {

// Expectation policy for E_{Z,x0}[...]. Gauss-Hermite is deterministic
// (tensor-product nodes for dimension > 1); Monte Carlo is seeded and
// reports standard errors.
struct Integrator {
    enum class Kind { GaussHermite, MonteCarlo };

    Kind kind = Kind::GaussHermite;
    int nodes = 127;               // per dimension
    std::size_t samples = 100000;  // MC draws
    std::uint64_t seed = 1;

    static Integrator gauss_hermite(int nodes = 127) {
        Integrator g;
        g.kind = Kind::GaussHermite;
        g.nodes = nodes;
        return g;
    }
    static Integrator monte_carlo(std::size_t samples = 100000, std::uint64_t seed = 1) {
        Integrator g;
        g.kind = Kind::MonteCarlo;
        g.samples = samples;
        g.seed = seed;
        return g;
    }

    // "gh:127" or "mc:100000" (optionally "mc:100000:seed")
    static Integrator parse(const std::string& text);
    std::string describe() const;

    Integrator with_seed(std::uint64_t s) const {
        Integrator g = *this;
        g.seed = s;
        return g;
    }
};

// Nodes/weights for E[f(Z)], Z ~ N(0,1): sum_i w_i f(z_i), sum_i w_i = 1.
// Cached per node count.
const std::vector<std::pair<double, double>>& gauss_hermite_points(int nodes);

}  // namespace tensorspike
