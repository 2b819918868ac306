#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tensorspike/model.hpp"

namespace tensorspike {

// H_N(X) = (1/delta) sum_{i1<...<ip} [ pref * Y * x_{i1}...x_{ip}
//                                      - (pref^2/2) (x_{i1}...x_{ip})^2 ],
// pref = sqrt((p-1)!)/N^{(p-1)/2}; rank-one configurations only.
double hamiltonian(std::span<const double> x, const SymmetricTensor& y, double delta);

struct ExactPosterior {
    std::size_t n = 0;
    int p = 0;
    double delta = 0;
    std::size_t support_size = 0;        // atoms per site
    std::vector<double> log_weights;     // one per configuration (mixed-radix id)
    double log_z = 0;
    std::vector<double> marginal_means;  // posterior mean per site
};

// Enumerates all |S|^n configurations of a discrete scalar prior (capacity
// cap 2^24). Rademacher/Bernoulli walk a Gray code with incremental
// Hamiltonian updates.
ExactPosterior exact_posterior(const SymmetricTensor& y, double delta,
                               const Prior& prior);

struct NishimoriInstance {
    double two_copy = 0;     // E_post <X.X'> from Gray-code marginals
    double planted_side = 0; // E_{X0|Y} <X>.X0 from an independent direct pass
    double discrepancy = 0;
};

struct NishimoriReport {
    std::vector<NishimoriInstance> instances;
    double max_discrepancy = 0;
    // MC identity MMSE_N = Sigma_X - E<X.X0> across trials
    double mmse_mc = 0;
    double identity_rhs = 0;
    double identity_stderr = 0;
};

NishimoriReport nishimori_check(int p, const Prior& prior, double delta,
                                std::size_t n, int trials, std::uint64_t seed);

struct ExactFreeEnergy {
    double f_n = 0;
    double stderr = 0;
    int trials = 0;
};

// F_N = (1/N) E[log Z_N] by Monte Carlo over planted instances with exact
// per-instance enumeration of Z_N.
ExactFreeEnergy exact_free_energy(std::size_t n, int p, const Prior& prior,
                                  double delta, int trials, std::uint64_t seed);

}  // namespace tensorspike
