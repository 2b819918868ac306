#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "tensorspike/oracle.hpp"
#include "tensorspike/rng.hpp"

using namespace tensorspike;

namespace {

// second, independently written Hamiltonian loop (combination recursion + at())
double hamiltonian_reference(const std::vector<double>& x, const SymmetricTensor& y,
                             double delta) {
    const std::size_t n = y.n(), p = y.p();
    const double pref = spike_prefactor(n, static_cast<int>(p));
    double acc = 0;
    std::vector<std::size_t> pick(p);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t level,
                                                            std::size_t start) {
        if (level == p) {
            double prod = 1.0;
            for (std::size_t d = 0; d < p; ++d) prod *= x[pick[d]];
            double w = y.at(std::span<const std::size_t>(pick.data(), p));
            acc += pref * w * prod - 0.5 * pref * pref * prod * prod;
            return;
        }
        for (std::size_t e = start; e < n; ++e) {
            pick[level] = e;
            rec(level + 1, e + 1);
        }
    };
    rec(0, 0);
    return acc / delta;
}

SymmetricTensor random_tensor(std::size_t n, std::size_t p, std::uint64_t seed) {
    SymmetricTensor t(n, p);
    auto& d = t.mutable_data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = rng::normal(seed, 99, k);
    return t;
}

}  // namespace

TEST_CASE("hamiltonian basics") {
    SymmetricTensor y = random_tensor(6, 3, 1);
    std::vector<double> zero(6, 0.0);
    CHECK(hamiltonian(zero, y, 0.7) == 0.0);

    // Y = 0 leaves only the quadratic term; Rademacher makes it constant
    SymmetricTensor y0(6, 3);
    std::vector<double> rad(6);
    for (std::size_t i = 0; i < 6; ++i) rad[i] = (i % 2) ? 1.0 : -1.0;
    double pref = spike_prefactor(6, 3);
    double expect = -0.5 * pref * pref * static_cast<double>(y0.size()) / 0.3;
    CHECK(hamiltonian(rad, y0, 0.3) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("hamiltonian dual-implementation check") {
    for (std::size_t n : {4, 6}) {
        SymmetricTensor y = random_tensor(n, 3, 2 * n);
        std::vector<double> x(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = rng::normal(7, 7, i);
        double a = hamiltonian(x, y, 0.42);
        double b = hamiltonian_reference(x, y, 0.42);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("exact posterior: flat likelihood recovers the prior mean") {
    SymmetricTensor y = random_tensor(7, 3, 5);
    for (const Prior& prior : {Prior::rademacher(), Prior::bernoulli(0.3)}) {
        ExactPosterior post = exact_posterior(y, 1e9, prior);
        double mean = prior.moments().mean(0);
        for (double m : post.marginal_means)
            CHECK(m == doctest::Approx(mean).epsilon(1e-8));
        double total = 0;
        for (double lw : post.log_weights) total += std::exp(lw - post.log_z);
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("exact posterior: near-noiseless enumeration recovers the signal") {
    const std::size_t n = 8;
    Prior prior = Prior::rademacher();
    MultiVector x0 = prior.sample(n, 3);
    SymmetricTensor y = observe(spike_tensor(x0, 3), Channel::awgn(1e-3), 3);
    ExactPosterior post = exact_posterior(y, 1e-3, prior);
    // odd p: the planted sign is identified (no global flip ambiguity)
    for (std::size_t i = 0; i < n; ++i)
        CHECK(post.marginal_means[i] * x0(i, 0) > 0.99);
}

TEST_CASE("even p: global flip symmetry kills the marginals exactly") {
    const std::size_t n = 8;
    Prior prior = Prior::rademacher();
    MultiVector x0 = prior.sample(n, 17);
    SymmetricTensor y = observe(spike_tensor(x0, 2), Channel::awgn(0.05), 17);
    ExactPosterior post = exact_posterior(y, 0.05, prior);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(std::fabs(post.marginal_means[i]) < 1e-11);
}

TEST_CASE("exact posterior marginals are permutation consistent") {
    const std::size_t n = 6;
    Prior prior = Prior::bernoulli(0.4);
    MultiVector x0 = prior.sample(n, 8);
    SymmetricTensor y = observe(spike_tensor(x0, 3), Channel::awgn(0.2), 8);

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 5 + 2) % n;
    SymmetricTensor y2(n, 3);
    std::vector<std::size_t> idx(3);
    colex_first(3, idx.data());
    do {
        std::vector<std::size_t> mapped = {perm[idx[0]], perm[idx[1]], perm[idx[2]]};
        std::sort(mapped.begin(), mapped.end());
        y2.mutable_data()[y2.rank_of(mapped)] =
            y.at(std::span<const std::size_t>(idx.data(), 3));
    } while (colex_next(n, 3, idx.data()));

    ExactPosterior a = exact_posterior(y, 0.2, prior);
    ExactPosterior b = exact_posterior(y2, 0.2, prior);
    for (std::size_t i = 0; i < n; ++i)
        CHECK(a.marginal_means[i] ==
              doctest::Approx(b.marginal_means[perm[i]]).epsilon(1e-11));
}

TEST_CASE("capacity and precondition errors") {
    CHECK_THROWS_AS(SymmetricTensor(2, 3), ShapeError);  // n < p: nothing observed
    SymmetricTensor y = random_tensor(16, 3, 1);
    Prior wide = Prior::discrete_scalar({-1, 0, 1}, {0.3, 0.4, 0.3});
    CHECK_THROWS_AS(exact_posterior(y, 1.0, wide), CapacityError);  // 3^16 > 2^24
    CHECK_THROWS_AS(exact_posterior(y, 1.0, Prior::gaussian(0.0)), CapacityError);
}

TEST_CASE("log-sum-exp survives huge Hamiltonians") {
    const std::size_t n = 6;
    Prior prior = Prior::rademacher();
    MultiVector x0 = prior.sample(n, 4);
    SymmetricTensor y = observe(spike_tensor(x0, 3), Channel::awgn(1e-7), 4);
    ExactPosterior post = exact_posterior(y, 1e-7, prior);  // |H| ~ 1e6 scale
    CHECK(std::isfinite(post.log_z));
    for (double m : post.marginal_means) CHECK(std::isfinite(m));
}

TEST_CASE("nishimori identity holds per instance to 1e-10") {
    for (const Prior& prior : {Prior::rademacher(), Prior::bernoulli(0.5)}) {
        NishimoriReport rep = nishimori_check(3, prior, 0.3, 8, 20, 1);
        CHECK(rep.instances.size() == 20);
        CHECK(rep.max_discrepancy < 1e-10);
        CHECK(std::fabs(rep.mmse_mc - rep.identity_rhs) <=
              3 * rep.identity_stderr + 1e-12);
    }
}

TEST_CASE("nishimori flat-likelihood limit") {
    NishimoriReport rep = nishimori_check(3, Prior::rademacher(), 1e8, 8, 5, 2);
    for (const auto& inst : rep.instances) {
        CHECK(inst.two_copy == doctest::Approx(0.0).epsilon(1e-8));
        CHECK(inst.planted_side == doctest::Approx(0.0).epsilon(1e-8));
    }
}

TEST_CASE("exact free energy") {
    // Z_N -> 1 when the likelihood is flat
    ExactFreeEnergy far = exact_free_energy(6, 3, Prior::rademacher(), 1e9, 200, 5);
    CHECK(std::fabs(far.f_n) < 3 * far.stderr + 1e-8);

    ExactFreeEnergy fe = exact_free_energy(6, 3, Prior::rademacher(), 0.2, 10000, 5);
    CHECK(fe.stderr < 0.01);
    CHECK(std::isfinite(fe.f_n));
}
