#include <doctest.h>

#include <cmath>

#include "tensorspike/phase.hpp"

using namespace tensorspike;

TEST_CASE("gaussian closed-form thresholds") {
    // mu = 0, p = 3: x_dyn = 1, delta_dyn = 1/4, delta_alg = 0
    GaussianThresholds g0 = gaussian_closed_thresholds(0.0, 3);
    CHECK(g0.x_dyn == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g0.delta_dyn == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(g0.delta_alg == 0.0);

    // delta_dyn(0) = (1/(p-2)) ((p-2)/(p-1))^{p-1}
    for (int p : {3, 4, 5, 10}) {
        GaussianThresholds g = gaussian_closed_thresholds(0.0, p);
        double expect = std::pow((p - 2.0) / (p - 1.0), p - 1.0) / (p - 2.0);
        CHECK(g.delta_dyn == doctest::Approx(expect).epsilon(1e-12));
    }
    // large p: delta_dyn(0) ~ 1/(e p); still 18% off at p = 10, tightening with p
    GaussianThresholds g10 = gaussian_closed_thresholds(0.0, 10);
    double dev10 = std::fabs(g10.delta_dyn * std::exp(1.0) * 10.0 - 1.0);
    CHECK(dev10 < 0.2);
    GaussianThresholds g40 = gaussian_closed_thresholds(0.0, 40);
    CHECK(std::fabs(g40.delta_dyn * std::exp(1.0) * 40.0 - 1.0) < dev10);

    // double root exactly at the tri-critical mean
    TriCriticalPoint tri = tri_critical(3, "gaussian");
    GaussianThresholds gt = gaussian_closed_thresholds(tri.param, 3);
    CHECK(gt.x_alg == doctest::Approx(gt.x_dyn).epsilon(1e-6));
    CHECK(gt.delta_alg == doctest::Approx(tri.delta).epsilon(1e-8));
    CHECK(gt.delta_dyn == doctest::Approx(tri.delta).epsilon(1e-8));
    CHECK_THROWS_AS(gaussian_closed_thresholds(tri.param + 0.01, 3), NumericError);
}

TEST_CASE("closed-form spinodals match SE bisection") {
    Integrator gh = Integrator::gauss_hermite(127);
    for (double mu : {0.1, 0.2}) {
        Prior prior = Prior::gaussian(mu);
        GaussianThresholds g = gaussian_closed_thresholds(mu, 3);
        double mid = std::sqrt(g.delta_alg * g.delta_dyn);
        double alg = find_delta_alg(3, prior, gh, {g.delta_alg * 0.2, mid}, 1e-7);
        CHECK(std::fabs(alg - g.delta_alg) < 1e-4);
        double dyn = find_delta_dyn(3, prior, gh, {mid, 1.0}, 1e-7);
        CHECK(std::fabs(dyn - g.delta_dyn) < 1e-4);
    }
    // p = 4 spot check
    Prior prior = Prior::gaussian(0.3);
    GaussianThresholds g = gaussian_closed_thresholds(0.3, 4);
    double mid = std::sqrt(g.delta_alg * g.delta_dyn);
    double alg = find_delta_alg(4, prior, gh, {g.delta_alg * 0.2, mid}, 1e-7);
    CHECK(std::fabs(alg - g.delta_alg) < 1e-4);
}

TEST_CASE("tri-critical points") {
    TriCriticalPoint t3 = tri_critical(3, "gaussian");
    CHECK(t3.param == doctest::Approx(1.0 / (2.0 * std::sqrt(2.0))).epsilon(1e-14));
    CHECK(t3.delta == doctest::Approx(27.0 / 64.0).epsilon(1e-14));
    // the numeric cusp solver lands on the closed form
    TriCriticalPoint tn = tri_critical(3, "gaussian", true);
    CHECK(tn.param == doctest::Approx(t3.param).epsilon(1e-6));
    CHECK(tn.delta == doctest::Approx(t3.delta).epsilon(1e-6));
    CHECK_THROWS_AS(tri_critical(2, "gaussian"), ShapeError);
}

TEST_CASE("classification") {
    Integrator gh = Integrator::gauss_hermite(127);
    CHECK(classify(0.1, 3, Prior::rademacher(), gh) == PhaseLabel::Hard);
    CHECK(classify(0.5, 3, Prior::rademacher(), gh) == PhaseLabel::ImpossibleToImprove);
    CHECK(classify(0.05, 3, Prior::gaussian(0.2), gh) == PhaseLabel::Easy);

    // labels change at most twice along delta
    int changes = 0;
    PhaseLabel prev = classify(0.01, 3, Prior::gaussian(0.2), gh);
    for (double d : {0.05, 0.1, 0.16, 0.2, 0.24, 0.27, 0.32, 0.5, 1.0}) {
        PhaseLabel cur = classify(d, 3, Prior::gaussian(0.2), gh);
        if (cur != prev) ++changes;
        prev = cur;
    }
    CHECK(changes <= 2);

    // zero-mean prior: hard straight into impossible-to-improve, in order
    prev = classify(0.01, 3, Prior::rademacher(), gh);
    CHECK(prev == PhaseLabel::Hard);
    changes = 0;
    for (double d : {0.1, 0.2, 0.27, 0.3, 0.4, 1.0}) {
        PhaseLabel cur = classify(d, 3, Prior::rademacher(), gh);
        if (cur != prev) {
            ++changes;
            CHECK(static_cast<int>(cur) > static_cast<int>(prev));
        }
        prev = cur;
    }
    CHECK(changes <= 2);
    CHECK(prev == PhaseLabel::ImpossibleToImprove);
}

TEST_CASE("information-theoretic threshold: paper values") {
    Integrator gh = Integrator::gauss_hermite(127);
    double it3 = find_delta_it(3, Prior::rademacher(), gh, {0.1, 1.0}, 1e-6);
    CHECK(std::fabs(it3 - 0.2828) < 5e-4);
    double it2 = find_delta_it(2, Prior::rademacher(), gh, {0.5, 2.0}, 1e-6);
    CHECK(std::fabs(it2 - 1.0) < 1e-3);
}

TEST_CASE("algorithmic threshold conventions") {
    Integrator gh = Integrator::gauss_hermite(127);
    // zero-mean p>=3: the hard phase reaches the numeric floor
    CHECK(find_delta_alg(3, Prior::gaussian(0.0), gh, {1e-8, 0.2}, 1e-6) == 0.0);
    CHECK(find_delta_alg(3, Prior::rademacher(), gh, {1e-8, 0.25}, 1e-6) == 0.0);
}

TEST_CASE("clusters: instability bisection hits (p-1)/r^(2p-2)") {
    Integrator gh = Integrator::gauss_hermite(24);
    for (auto [p, r] : {std::pair<int, int>{3, 3}, {2, 2}, {4, 2}}) {
        double expect = (p - 1.0) / std::pow(r, 2 * p - 2);
        double got = find_delta_c(p, Prior::clusters(r), gh,
                                  {expect * 0.3, expect * 3.0}, 1e-7);
        CHECK(std::fabs(got / expect - 1.0) < 1e-5);
    }
}

TEST_CASE("first-order discriminant") {
    CHECK(first_order_discriminant(3, 3).value == 0);
    CHECK(first_order_discriminant(3, 3).label == "marginal");
    CHECK(first_order_discriminant(3, 2).value == -2);
    CHECK(first_order_discriminant(3, 2).label == "second_order");
    CHECK(first_order_discriminant(4, 3).value == 1);
    CHECK(first_order_discriminant(4, 3).label == "first_order");
}

TEST_CASE("threshold set ordering invariants") {
    Integrator gh = Integrator::gauss_hermite(127);
    ThresholdSet ts = compute_thresholds(3, Prior::gaussian(0.2), gh, 1e-6);
    CHECK(ts.delta_alg <= ts.delta_c + 1e-9);
    CHECK(ts.delta_alg <= ts.delta_it + 1e-9);
    CHECK(ts.delta_it <= ts.delta_dyn * (1 + 1e-5));
    // closed forms again
    GaussianThresholds g = gaussian_closed_thresholds(0.2, 3);
    CHECK(std::fabs(ts.delta_alg - g.delta_alg) < 2e-4);
    CHECK(std::fabs(ts.delta_dyn - g.delta_dyn) < 2e-4);

    ThresholdSet rad = compute_thresholds(3, Prior::rademacher(), gh, 1e-6);
    CHECK(rad.delta_alg == 0.0);
    CHECK(rad.delta_c == 0.0);
    CHECK(std::fabs(rad.delta_it - 0.2828) < 5e-4);
    CHECK(rad.delta_it <= rad.delta_dyn);

    // no hard phase for p = 2: all transitions coincide
    ThresholdSet r2 = compute_thresholds(2, Prior::rademacher(), gh, 1e-6);
    CHECK(r2.delta_alg == doctest::Approx(r2.delta_c).epsilon(1e-9));
    CHECK(std::fabs(r2.delta_it - 1.0) < 2e-3);
    CHECK(std::fabs(r2.delta_c - 1.0) < 2e-3);
}

TEST_CASE("phase diagram sweep rows") {
    Integrator gh = Integrator::gauss_hermite(127);
    auto rows = sweep_phase_diagram("gaussian", 3, {0.1, 0.3}, {0.05, 0.4}, gh, 1e-5);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].label == "hard");  // 0.05 sits inside (0.0396, delta_it)
    CHECK(rows[1].label == "easy");  // above the spinodal window
    CHECK(rows[2].label == "easy");  // below the mu=0.3 window
    CHECK(rows[3].label == "easy");
    for (const auto& row : rows) CHECK(row.delta_alg <= row.delta_it * (1 + 1e-5));
    GaussianThresholds g = gaussian_closed_thresholds(0.1, 3);
    CHECK(std::fabs(rows[0].delta_alg - g.delta_alg) < 2e-4);
}
