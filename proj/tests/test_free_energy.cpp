#include <doctest.h>

#include <cmath>

#include "tensorspike/free_energy.hpp"
#include "tensorspike/state_evolution.hpp"

using namespace tensorspike;

namespace {

Eigen::MatrixXd scalar(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

// independent quadrature oracle for the rank-one potential: composite Simpson
// over z with the tilted-prior integral summed atom by atom
double phi_oracle_discrete(double m, double delta, int p, const Prior& prior) {
    const double mhat = std::pow(m, p - 1) / delta;
    const double shalf = std::sqrt(mhat);
    auto inner = [&](double x0, double z) {
        // log int dP_X(x) exp(B x - mhat x^2 / 2), B = mhat x0 + shalf z
        double b = mhat * x0 + shalf * z;
        double best = -INFINITY;
        for (auto [x, w] : prior.atoms())
            best = std::max(best, std::log(w) + b * x - 0.5 * mhat * x * x);
        double acc = 0;
        for (auto [x, w] : prior.atoms())
            acc += std::exp(std::log(w) + b * x - 0.5 * mhat * x * x - best);
        return best + std::log(acc);
    };
    const int grid = 40001;
    const double zmax = 14.0;
    double total = 0;
    for (auto [x0, w0] : prior.atoms()) {
        double acc = 0;
        for (int i = 0; i < grid; ++i) {
            double z = -zmax + 2 * zmax * i / (grid - 1.0);
            double weight = (i == 0 || i == grid - 1) ? 1 : (i % 2 ? 4 : 2);
            acc += weight * inner(x0, z) * std::exp(-0.5 * z * z);
        }
        acc *= (2 * zmax / (grid - 1.0)) / 3.0 / std::sqrt(2 * M_PI);
        total += w0 * acc;
    }
    return total - (p - 1.0) / (2.0 * p * delta) * std::pow(m, p);
}

}  // namespace

TEST_CASE("phi vanishes at m = 0 for zero-mean priors") {
    Integrator gh = Integrator::gauss_hermite(127);
    CHECK(phi_rs_scalar(0.0, 0.3, 3, Prior::rademacher(), gh) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(phi_rs_scalar(0.0, 0.3, 3, Prior::gaussian(0.0), gh) ==
          doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("rank-one potential matches an independent quadrature oracle") {
    Integrator gh = Integrator::gauss_hermite(127);
    for (const Prior& prior : {Prior::rademacher(), Prior::bernoulli(0.2)}) {
        for (double m : {0.1, 0.6}) {
            for (double delta : {0.1, 0.4}) {
                double fast = phi_rs_scalar(m, delta, 3, prior, gh);
                double oracle = phi_oracle_discrete(m, delta, 3, prior);
                CHECK(fast == doctest::Approx(oracle).epsilon(1e-8));
            }
        }
    }
}

TEST_CASE("gaussian closed form equals the generic quadrature path") {
    Integrator gh = Integrator::gauss_hermite(127);
    for (double mu : {0.0, 0.2, 0.4}) {
        Prior prior = Prior::gaussian(mu);
        for (double m : {0.0, 0.3, 1.0}) {
            for (double delta : {0.05, 0.5}) {
                double closed = phi_rs(scalar(m), delta, 3, prior, gh);
                double generic = phi_rs_generic(scalar(m), delta, 3, prior, gh);
                CHECK(closed == doctest::Approx(generic).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("SE fixed points are stationary points of phi") {
    Integrator gh = Integrator::gauss_hermite(127);
    auto check_stationary = [&](const Prior& prior, double delta, SeInit init) {
        SeFixedPoint fp = se_fixed_point(delta, 3, prior, init, gh, 1e-13, 200000);
        double m = fp.m_star(0, 0);
        if (m < 1e-10) return;  // boundary stationary point
        double h = 1e-5 * std::max(m, 0.1);
        double der = (phi_rs_scalar(m + h, delta, 3, prior, gh) -
                      phi_rs_scalar(m - h, delta, 3, prior, gh)) /
                     (2 * h);
        CHECK(std::fabs(der) < 1e-6);
    };
    check_stationary(Prior::rademacher(), 0.2, SeInit::Informative);
    check_stationary(Prior::rademacher(), 0.25, SeInit::Eps);
    check_stationary(Prior::gaussian(0.2), 0.05, SeInit::Informative);
    check_stationary(Prior::gaussian(0.2), 0.15, SeInit::Eps);
    check_stationary(Prior::bernoulli(0.2), 0.01, SeInit::Informative);
}

TEST_CASE("maximizer behavior across the transition") {
    Integrator gh = Integrator::gauss_hermite(127);
    // Delta -> infinity: maximizer collapses to mean^2
    FreeEnergyCurve far = maximize_phi_rs(1e3, 3, Prior::gaussian(0.2), gh);
    CHECK(far.m_star == doctest::Approx(0.04).epsilon(1e-3));

    // Rademacher p=3 around Delta_IT = 0.2828
    FreeEnergyCurve low = maximize_phi_rs(0.2, 3, Prior::rademacher(), gh);
    CHECK(low.m_star > 0.5);
    FreeEnergyCurve high = maximize_phi_rs(0.35, 3, Prior::rademacher(), gh);
    CHECK(high.m_star < 1e-6);
}

TEST_CASE("mutual information limits and continuity at the transition") {
    Integrator gh = Integrator::gauss_hermite(127);
    CHECK(mutual_information(1e6, 3, Prior::rademacher(), gh) ==
          doctest::Approx(0.0).epsilon(1e-6));
    double below = mutual_information(0.2828 - 5e-4, 3, Prior::rademacher(), gh);
    double above = mutual_information(0.2828 + 5e-4, 3, Prior::rademacher(), gh);
    CHECK(below > above);  // decreasing in delta
    CHECK(std::fabs(below - above) < 1e-2);
    // no jump: shrink the window and the gap shrinks proportionally
    double b2 = mutual_information(0.2828 - 5e-5, 3, Prior::rademacher(), gh);
    double a2 = mutual_information(0.2828 + 5e-5, 3, Prior::rademacher(), gh);
    CHECK(std::fabs(b2 - a2) < 1e-4);
}

TEST_CASE("mmse and tensor-mmse") {
    Integrator gh = Integrator::gauss_hermite(127);
    CHECK(mmse(1e-5, 3, Prior::rademacher(), gh) == doctest::Approx(0.0).epsilon(1e-4));
    CHECK(mmse(0.4, 3, Prior::rademacher(), gh) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(t_mmse(0.4, 3, Prior::rademacher(), gh) == doctest::Approx(1.0).epsilon(1e-8));
    // T-MMSE = Sigma^p - (Sigma - MMSE)^p at any delta
    for (double delta : {0.05, 0.2, 0.4}) {
        double mm = mmse(delta, 3, Prior::rademacher(), gh);
        double tm = t_mmse(delta, 3, Prior::rademacher(), gh);
        CHECK(tm == doctest::Approx(1.0 - std::pow(1.0 - mm, 3)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(t_mmse(0.1, 3, Prior::clusters(3), gh), ShapeError);

    // gaussian mu=0.2: the MMSE jumps across its first-order transition,
    // somewhere inside the bistable window (0.1533, 0.2935)
    double prev = -1;
    double max_jump = 0;
    for (double d = 0.24; d <= 0.30; d += 0.001) {
        double v = mmse(d, 3, Prior::gaussian(0.2), gh);
        CHECK(v >= prev - 1e-9);  // non-decreasing in delta
        if (prev >= 0) max_jump = std::max(max_jump, v - prev);
        prev = v;
    }
    CHECK(max_jump > 0.1);
}

TEST_CASE("I-MMSE finite-difference identity and convexity") {
    Integrator gh = Integrator::gauss_hermite(127);
    // grid below the transition (Delta_IT = 0.2828): identity holds to 1e-3
    std::vector<double> deltas;
    for (int i = 0; i < 24; ++i) deltas.push_back(0.05 + 0.006 * i);
    ImmsReport rep = imms_consistency(deltas, 3, Prior::rademacher(), gh);
    CHECK(rep.max_rel_violation < 1e-3);
    CHECK(rep.min_second_difference >= -1e-6);

    // a grid straddling the transition shows the kink
    std::vector<double> wide;
    for (int i = 0; i < 30; ++i) wide.push_back(0.15 + 0.01 * i);
    ImmsReport rep2 = imms_consistency(wide, 3, Prior::rademacher(), gh);
    CHECK(rep2.kink_delta == doctest::Approx(0.2828).epsilon(0.05));
}
